//! Content pool and immutable, digest-addressed golden-dataset versions.
//!
//! On-disk layout under a store root:
//!
//! ```text
//! pool.jsonl                      one ContentItem per line, append-only
//! policies/<policy_id>@<v>.json   registered policy versions
//! versions/<version_id>/manifest.json
//! versions/<version_id>/records.jsonl
//! ```
//!
//! A version id is the SHA-256 of the canonical serialization of
//! `(parent_id, policy, records sorted by item_id)`. Version directories are
//! written to a temporary name and renamed into place, and are never
//! rewritten afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    ContentItem, GoldLabel, ModelError, PolicyRef, PolicyVersion, Source, Timestamp,
    DEFAULT_EMBEDDING_DIM,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed item `{item_id}`: {reason}")]
    MalformedItem { item_id: String, reason: String },
    #[error("item `{0}` is not in the content pool")]
    UnknownItem(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("nothing to publish: no labels and no parent")]
    EmptyPublish,
    #[error("item `{0}` is labeled more than once in one publish")]
    DuplicateLabel(String),
    #[error("parent version is under policy {parent}, cannot extend it under {child}")]
    CrossPolicyParent { parent: PolicyRef, child: PolicyRef },
    #[error("version `{0}` not found")]
    NotFound(String),
    #[error("version `{id}` failed verification: {reason}")]
    CorruptVersion { id: String, reason: String },
    #[error("version `{ancestor}` is not an ancestor of `{descendant}`")]
    NotAncestor { ancestor: String, descendant: String },
    #[error("policy {0} is referenced by a published version and cannot change")]
    PolicyImmutable(PolicyRef),
    #[error("policy {0} is not registered")]
    PolicyNotFound(PolicyRef),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::MalformedItem { .. } => "malformed_item",
            StoreError::UnknownItem(_) => "unknown_item",
            StoreError::Model(e) => e.code(),
            StoreError::EmptyPublish => "empty_publish",
            StoreError::DuplicateLabel(_) => "duplicate_label",
            StoreError::CrossPolicyParent { .. } => "cross_policy_parent",
            StoreError::NotFound(_) => "not_found",
            StoreError::CorruptVersion { .. } => "corrupt_version",
            StoreError::NotAncestor { .. } => "not_ancestor",
            StoreError::PolicyImmutable(_) => "policy_immutable",
            StoreError::PolicyNotFound(_) => "policy_not_found",
            StoreError::Io(_) => "io",
            StoreError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContentPool {
    dim: Option<usize>,
    items: BTreeMap<String, ContentItem>,
    provenance: BTreeMap<Source, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub duplicates: usize,
    pub duplicate_ids: Vec<String>,
    pub pool_size: usize,
}

impl ContentPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// A pool whose embedding dimension is fixed up front.
    pub fn with_dim(dim: usize) -> Self {
        ContentPool {
            dim: Some(dim),
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(DEFAULT_EMBEDDING_DIM)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&ContentItem> {
        self.items.get(item_id)
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.items.contains_key(item_id)
    }

    /// Items in ascending item_id order.
    pub fn items(&self) -> impl Iterator<Item = &ContentItem> {
        self.items.values()
    }

    pub fn provenance(&self) -> &BTreeMap<Source, usize> {
        &self.provenance
    }

    fn check_item(&self, dim: usize, item: &ContentItem) -> Result<()> {
        let malformed = |reason: String| StoreError::MalformedItem {
            item_id: item.item_id.clone(),
            reason,
        };
        if item.item_id.is_empty() {
            return Err(malformed("empty item_id".into()));
        }
        item.code.check().map_err(|e| malformed(e.to_string()))?;
        if item.embedding.dim() != dim {
            return Err(malformed(format!(
                "embedding length {} != {dim}",
                item.embedding.dim()
            )));
        }
        if !item.embedding.is_finite() {
            return Err(malformed("non-finite embedding entry".into()));
        }
        Ok(())
    }

    /// Adds novel items; items whose id is already present are skipped and
    /// reported. Validation happens before any insertion, so a malformed item
    /// leaves the pool unchanged.
    pub fn ingest_candidates(&mut self, items: Vec<ContentItem>) -> Result<IngestReport> {
        let dim = self
            .dim
            .or_else(|| items.first().map(|i| i.embedding.dim()))
            .unwrap_or(DEFAULT_EMBEDDING_DIM);
        for item in &items {
            self.check_item(dim, item)?;
        }
        self.dim = Some(dim);
        let (added, duplicate_ids) = self.insert_all(items);
        Ok(IngestReport {
            added: added.len(),
            duplicates: duplicate_ids.len(),
            duplicate_ids,
            pool_size: self.items.len(),
        })
    }

    fn insert_all(&mut self, items: Vec<ContentItem>) -> (Vec<String>, Vec<String>) {
        let mut added = Vec::new();
        let mut duplicates = Vec::new();
        for item in items {
            if self.items.contains_key(&item.item_id) {
                duplicates.push(item.item_id);
            } else {
                *self.provenance.entry(item.source).or_default() += 1;
                added.push(item.item_id.clone());
                self.items.insert(item.item_id.clone(), item);
            }
        }
        (added, duplicates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdsVersion {
    pub version_id: String,
    pub parent_id: Option<String>,
    pub policy: PolicyRef,
    pub records: BTreeMap<String, GoldLabel>,
    pub created_at: Timestamp,
    pub item_count: usize,
}

impl GdsVersion {
    pub fn label_of(&self, item_id: &str) -> Option<&str> {
        self.records.get(item_id).map(|r| r.label.as_str())
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.records.contains_key(item_id)
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version_id: self.version_id.clone(),
            parent_id: self.parent_id.clone(),
            policy_id: self.policy.policy_id.clone(),
            policy_version: self.policy.version,
            item_count: self.item_count,
            created_at: self.created_at,
            records_digest: sha256_hex(&records_bytes(&self.records)),
        }
    }
}

/// `manifest.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version_id: String,
    pub parent_id: Option<String>,
    pub policy_id: String,
    pub policy_version: u32,
    pub item_count: usize,
    pub created_at: Timestamp,
    pub records_digest: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `records.jsonl` bytes: one GoldLabel per line, ascending item_id.
pub fn records_bytes(records: &BTreeMap<String, GoldLabel>) -> Vec<u8> {
    let mut out = Vec::new();
    for label in records.values() {
        serde_json::to_writer(&mut out, label).expect("gold label serializes");
        out.push(b'\n');
    }
    out
}

#[derive(Serialize)]
struct CanonicalHeader<'a> {
    parent_id: Option<&'a str>,
    policy: &'a PolicyRef,
}

fn canonical_bytes(parent_id: Option<&str>, policy: &PolicyRef, records: &[u8]) -> Vec<u8> {
    let mut out = serde_json::to_vec(&CanonicalHeader { parent_id, policy })
        .expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(records);
    out
}

/// Content digest of a version's identity-bearing fields.
pub fn version_digest(
    parent_id: Option<&str>,
    policy: &PolicyRef,
    records: &BTreeMap<String, GoldLabel>,
) -> String {
    sha256_hex(&canonical_bytes(parent_id, policy, &records_bytes(records)))
}

/// Assembles a version from an explicit record set; shared by ordinary
/// publishing and relabeling.
pub(crate) fn assemble_version(
    parent_id: Option<String>,
    policy: PolicyRef,
    records: BTreeMap<String, GoldLabel>,
    created_at: Timestamp,
) -> GdsVersion {
    let version_id = version_digest(parent_id.as_deref(), &policy, &records);
    GdsVersion {
        version_id,
        parent_id,
        item_count: records.len(),
        policy,
        records,
        created_at,
    }
}

/// Validates a batch of new gold labels against the pool and policy and
/// returns them keyed by item id.
pub(crate) fn check_labels(
    pool: &ContentPool,
    labels: Vec<GoldLabel>,
    policy: &PolicyVersion,
) -> Result<BTreeMap<String, GoldLabel>> {
    let reference = policy.reference();
    let mut out = BTreeMap::new();
    for label in labels {
        if !pool.contains(&label.item_id) {
            return Err(StoreError::UnknownItem(label.item_id));
        }
        if label.policy != reference {
            return Err(ModelError::PolicyMismatch {
                expected: reference,
                found: label.policy,
            }
            .into());
        }
        policy.check_label(&label.label)?;
        if out.contains_key(&label.item_id) {
            return Err(StoreError::DuplicateLabel(label.item_id));
        }
        out.insert(label.item_id.clone(), label);
    }
    Ok(out)
}

/// Builds a new version: the parent's records overridden or extended by
/// `labels`. The parent is not modified.
pub fn publish_version(
    pool: &ContentPool,
    parent: Option<&GdsVersion>,
    labels: Vec<GoldLabel>,
    policy: &PolicyVersion,
) -> Result<GdsVersion> {
    publish_version_at(pool, parent, labels, policy, Utc::now())
}

pub fn publish_version_at(
    pool: &ContentPool,
    parent: Option<&GdsVersion>,
    labels: Vec<GoldLabel>,
    policy: &PolicyVersion,
    created_at: Timestamp,
) -> Result<GdsVersion> {
    if labels.is_empty() && parent.is_none() {
        return Err(StoreError::EmptyPublish);
    }
    let reference = policy.reference();
    if let Some(parent) = parent {
        if parent.policy != reference {
            return Err(StoreError::CrossPolicyParent {
                parent: parent.policy.clone(),
                child: reference,
            });
        }
    }
    let fresh = check_labels(pool, labels, policy)?;
    let mut records = parent.map(|p| p.records.clone()).unwrap_or_default();
    records.extend(fresh);
    Ok(assemble_version(
        parent.map(|p| p.version_id.clone()),
        reference,
        records,
        created_at,
    ))
}

/// Anything that can resolve a version id.
pub trait VersionSource {
    fn version(&self, version_id: &str) -> Result<GdsVersion>;
}

/// In-memory version table, handy for simulation loops and tests.
#[derive(Debug, Default, Clone)]
pub struct MemoryVersions {
    versions: HashMap<String, GdsVersion>,
}

impl MemoryVersions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, version: GdsVersion) {
        self.versions.insert(version.version_id.clone(), version);
    }
}

impl VersionSource for MemoryVersions {
    fn version(&self, version_id: &str) -> Result<GdsVersion> {
        self.versions
            .get(version_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(version_id.to_string()))
    }
}

/// Version ids from `child` back to the root, child first.
pub fn lineage(child: &GdsVersion, source: &impl VersionSource) -> Result<Vec<String>> {
    let mut chain = vec![child.version_id.clone()];
    let mut seen: HashSet<String> = chain.iter().cloned().collect();
    let mut next = child.parent_id.clone();
    while let Some(id) = next {
        if !seen.insert(id.clone()) {
            return Err(StoreError::CorruptVersion {
                id,
                reason: "cycle in parent chain".into(),
            });
        }
        let version = source.version(&id)?;
        chain.push(id);
        next = version.parent_id;
    }
    Ok(chain)
}

/// Item ids in `child` that are not in `parent`, where `parent` must be an
/// ancestor of (or equal to) `child`.
pub fn new_items(
    child: &GdsVersion,
    parent: &GdsVersion,
    source: &impl VersionSource,
) -> Result<BTreeSet<String>> {
    let chain = lineage(child, source)?;
    if !chain.contains(&parent.version_id) {
        return Err(StoreError::NotAncestor {
            ancestor: parent.version_id.clone(),
            descendant: child.version_id.clone(),
        });
    }
    Ok(child
        .records
        .keys()
        .filter(|id| !parent.records.contains_key(*id))
        .cloned()
        .collect())
}

/// Filesystem-backed store. Writes are expected to go through one writer at a
/// time; published versions can be read concurrently without coordination.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("versions"))?;
        fs::create_dir_all(root.join("policies"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn pool_path(&self) -> PathBuf {
        self.root.join("pool.jsonl")
    }

    pub fn version_dir(&self, version_id: &str) -> PathBuf {
        self.root.join("versions").join(version_id)
    }

    fn policy_path(&self, policy: &PolicyRef) -> PathBuf {
        self.root.join("policies").join(format!("{policy}.json"))
    }

    pub fn load_pool(&self) -> Result<ContentPool> {
        let mut pool = ContentPool::new();
        let path = self.pool_path();
        if !path.exists() {
            return Ok(pool);
        }
        let mut items = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            items.push(serde_json::from_str::<ContentItem>(&line)?);
        }
        if let Some(first) = items.first() {
            pool.dim = Some(first.embedding.dim());
        }
        pool.insert_all(items);
        Ok(pool)
    }

    /// Ingests items and appends the novel ones to `pool.jsonl`.
    pub fn ingest(&self, items: Vec<ContentItem>) -> Result<(ContentPool, IngestReport)> {
        let mut pool = self.load_pool()?;
        let before: HashSet<String> = pool.items.keys().cloned().collect();
        let report = pool.ingest_candidates(items)?;
        let mut buf = Vec::new();
        let mut appended = HashSet::new();
        for item in pool.items.values() {
            if !before.contains(&item.item_id) && appended.insert(item.item_id.clone()) {
                serde_json::to_writer(&mut buf, item)?;
                buf.push(b'\n');
            }
        }
        if !buf.is_empty() {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.pool_path())?;
            file.write_all(&buf)?;
            file.sync_all()?;
        }
        Ok((pool, report))
    }

    pub fn register_policy(&self, policy: &PolicyVersion) -> Result<()> {
        policy.check()?;
        let reference = policy.reference();
        let path = self.policy_path(&reference);
        if path.exists() {
            let existing = self.policy(&reference)?;
            if &existing == policy {
                return Ok(());
            }
            if self.policy_is_referenced(&reference)? {
                return Err(StoreError::PolicyImmutable(reference));
            }
        }
        write_atomic(&path, &serde_json::to_vec_pretty(policy)?)?;
        Ok(())
    }

    pub fn policy(&self, reference: &PolicyRef) -> Result<PolicyVersion> {
        let path = self.policy_path(reference);
        if !path.exists() {
            return Err(StoreError::PolicyNotFound(reference.clone()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    fn policy_is_referenced(&self, reference: &PolicyRef) -> Result<bool> {
        for id in self.list_versions()? {
            let manifest = self.read_manifest(&id)?;
            if manifest.policy_id == reference.policy_id
                && manifest.policy_version == reference.version
            {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Persists a version. If a version with the same id is already stored it
    /// is returned untouched, so re-publishing is idempotent and never rewrites
    /// a file.
    pub fn persist(&self, version: &GdsVersion) -> Result<GdsVersion> {
        let expected = version_digest(
            version.parent_id.as_deref(),
            &version.policy,
            &version.records,
        );
        if expected != version.version_id {
            return Err(StoreError::CorruptVersion {
                id: version.version_id.clone(),
                reason: "version_id does not match content".into(),
            });
        }
        let target = self.version_dir(&version.version_id);
        if target.exists() {
            return self.get_version(&version.version_id);
        }
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let tmp = self.root.join("versions").join(format!(
            ".tmp-{}-{}-{nanos}",
            &version.version_id[..12],
            std::process::id()
        ));
        fs::create_dir_all(&tmp)?;
        write_synced(&tmp.join("records.jsonl"), &records_bytes(&version.records))?;
        write_synced(
            &tmp.join("manifest.json"),
            &serde_json::to_vec_pretty(&version.manifest())?,
        )?;
        match fs::rename(&tmp, &target) {
            Ok(()) => Ok(version.clone()),
            Err(_) if target.exists() => {
                fs::remove_dir_all(&tmp)?;
                self.get_version(&version.version_id)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Builds and persists a version on top of a stored parent.
    pub fn publish(
        &self,
        parent_id: Option<&str>,
        labels: Vec<GoldLabel>,
        policy: &PolicyRef,
        created_at: Timestamp,
    ) -> Result<GdsVersion> {
        let policy = self.policy(policy)?;
        let pool = self.load_pool()?;
        let parent = parent_id.map(|id| self.get_version(id)).transpose()?;
        let version = publish_version_at(&pool, parent.as_ref(), labels, &policy, created_at)?;
        self.persist(&version)
    }

    fn read_manifest(&self, version_id: &str) -> Result<Manifest> {
        let path = self.version_dir(version_id).join("manifest.json");
        if !path.exists() {
            return Err(StoreError::NotFound(version_id.to_string()));
        }
        serde_json::from_slice(&fs::read(path)?).map_err(|e| StoreError::CorruptVersion {
            id: version_id.to_string(),
            reason: format!("unreadable manifest: {e}"),
        })
    }

    /// Reads a version and verifies both digests against its content.
    pub fn get_version(&self, version_id: &str) -> Result<GdsVersion> {
        if version_id.is_empty() || version_id.contains(['/', '\\', '.']) {
            return Err(StoreError::NotFound(version_id.to_string()));
        }
        let manifest = self.read_manifest(version_id)?;
        let corrupt = |reason: String| StoreError::CorruptVersion {
            id: version_id.to_string(),
            reason,
        };
        let bytes = fs::read(self.version_dir(version_id).join("records.jsonl"))?;
        if sha256_hex(&bytes) != manifest.records_digest {
            return Err(corrupt("records digest mismatch".into()));
        }
        let policy = PolicyRef::new(manifest.policy_id.clone(), manifest.policy_version);
        let recomputed = sha256_hex(&canonical_bytes(
            manifest.parent_id.as_deref(),
            &policy,
            &bytes,
        ));
        if recomputed != manifest.version_id || manifest.version_id != version_id {
            return Err(corrupt("version digest mismatch".into()));
        }
        let mut records = BTreeMap::new();
        for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
            let label: GoldLabel =
                serde_json::from_slice(line).map_err(|e| corrupt(format!("bad record: {e}")))?;
            records.insert(label.item_id.clone(), label);
        }
        if records.len() != manifest.item_count {
            return Err(corrupt("item_count mismatch".into()));
        }
        Ok(GdsVersion {
            version_id: manifest.version_id,
            parent_id: manifest.parent_id,
            policy,
            records,
            created_at: manifest.created_at,
            item_count: manifest.item_count,
        })
    }

    /// Ids of all stored versions, sorted.
    pub fn list_versions(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("versions"))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }
}

impl VersionSource for Store {
    fn version(&self, version_id: &str) -> Result<GdsVersion> {
        self.get_version(version_id)
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    Ok(())
}

/// Write-temp-then-rename for files that are replaced as a whole.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    write_synced(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_epoch, Embedding, SemanticCode};

    pub(crate) fn item(id: &str, code: u32) -> ContentItem {
        ContentItem {
            item_id: id.into(),
            embedding: Embedding(vec![0.0; 4]),
            code: SemanticCode::new(code.min(255)).unwrap(),
            source: Source::Synthetic,
            created_at: reference_epoch(),
        }
    }

    fn gold(id: &str, label: &str, policy: &PolicyVersion) -> GoldLabel {
        GoldLabel {
            item_id: id.into(),
            policy: policy.reference(),
            label: label.into(),
            sme_id: "sme".into(),
            adjudicated: true,
        }
    }

    fn pool_of(ids: &[&str]) -> ContentPool {
        let mut pool = ContentPool::with_dim(4);
        pool.ingest_candidates(ids.iter().map(|id| item(id, 1)).collect())
            .unwrap();
        pool
    }

    #[test]
    fn ingest_into_empty_pool() {
        let mut pool = ContentPool::with_dim(4);
        let report = pool
            .ingest_candidates(vec![item("a", 1), item("b", 2), item("c", 3)])
            .unwrap();
        assert_eq!(report.pool_size, 3);
        assert_eq!(report.duplicates, 0);
        assert_eq!(pool.provenance()[&Source::Synthetic], 3);
    }

    #[test]
    fn ingest_reports_duplicates() {
        let mut pool = pool_of(&["a"]);
        let report = pool.ingest_candidates(vec![item("a", 1), item("b", 1)]).unwrap();
        assert_eq!(report.pool_size, 2);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.duplicate_ids, vec!["a".to_string()]);
    }

    #[test]
    fn ingest_rejects_bad_code_and_dim() {
        let mut pool = ContentPool::with_dim(4);
        let mut bad = item("x", 1);
        bad.code = serde_json::from_str("300").unwrap();
        let err = pool.ingest_candidates(vec![item("a", 1), bad]).unwrap_err();
        assert!(matches!(err, StoreError::MalformedItem { .. }));
        assert!(pool.is_empty());

        let mut short = item("y", 1);
        short.embedding = Embedding(vec![1.0]);
        assert!(matches!(
            pool.ingest_candidates(vec![short]),
            Err(StoreError::MalformedItem { .. })
        ));
    }

    #[test]
    fn publish_without_parent() {
        let policy = PolicyVersion::binary("adult", 1);
        let pool = pool_of(&["a", "b"]);
        let v = publish_version(
            &pool,
            None,
            vec![gold("a", "positive", &policy), gold("b", "negative", &policy)],
            &policy,
        )
        .unwrap();
        assert_eq!(v.item_count, 2);
        assert_eq!(v.version_id.len(), 64);
    }

    #[test]
    fn publish_is_deterministic() {
        let policy = PolicyVersion::binary("adult", 1);
        let pool = pool_of(&["a", "b"]);
        let labels = vec![gold("b", "negative", &policy), gold("a", "positive", &policy)];
        let mut reversed = labels.clone();
        reversed.reverse();
        let v1 = publish_version(&pool, None, labels, &policy).unwrap();
        let v2 = publish_version(&pool, None, reversed, &policy).unwrap();
        assert_eq!(v1.version_id, v2.version_id);
    }

    #[test]
    fn publish_errors() {
        let policy = PolicyVersion::binary("adult", 1);
        let pool = pool_of(&["a"]);
        assert!(matches!(
            publish_version(&pool, None, vec![], &policy),
            Err(StoreError::EmptyPublish)
        ));
        assert!(matches!(
            publish_version(&pool, None, vec![gold("zz", "positive", &policy)], &policy),
            Err(StoreError::UnknownItem(_))
        ));
        assert!(matches!(
            publish_version(&pool, None, vec![gold("a", "maybe", &policy)], &policy),
            Err(StoreError::Model(ModelError::UnknownLabel { .. }))
        ));
        let parent =
            publish_version(&pool, None, vec![gold("a", "positive", &policy)], &policy).unwrap();
        let v2 = PolicyVersion::binary("adult", 2);
        assert!(matches!(
            publish_version(&pool, Some(&parent), vec![], &v2),
            Err(StoreError::CrossPolicyParent { .. })
        ));
    }

    #[test]
    fn child_override_leaves_parent_alone() {
        let policy = PolicyVersion::binary("adult", 1);
        let pool = pool_of(&["a"]);
        let parent =
            publish_version(&pool, None, vec![gold("a", "positive", &policy)], &policy).unwrap();
        let child =
            publish_version(&pool, Some(&parent), vec![gold("a", "negative", &policy)], &policy)
                .unwrap();
        assert_eq!(child.label_of("a"), Some("negative"));
        assert_eq!(parent.label_of("a"), Some("positive"));
        assert_eq!(child.parent_id.as_deref(), Some(parent.version_id.as_str()));
        assert_ne!(child.version_id, parent.version_id);
    }

    #[test]
    fn new_items_over_lineage() {
        let policy = PolicyVersion::binary("adult", 1);
        let pool = pool_of(&["a", "b", "c"]);
        let parent =
            publish_version(&pool, None, vec![gold("a", "positive", &policy)], &policy).unwrap();
        let child = publish_version(
            &pool,
            Some(&parent),
            vec![gold("b", "positive", &policy), gold("c", "negative", &policy)],
            &policy,
        )
        .unwrap();
        let mut versions = MemoryVersions::new();
        versions.insert(parent.clone());
        versions.insert(child.clone());

        let fresh = new_items(&child, &parent, &versions).unwrap();
        assert_eq!(fresh, ["b", "c"].iter().map(|s| s.to_string()).collect());
        assert!(new_items(&parent, &parent, &versions).unwrap().is_empty());

        let unrelated =
            publish_version(&pool, None, vec![gold("c", "positive", &policy)], &policy).unwrap();
        versions.insert(unrelated.clone());
        assert!(matches!(
            new_items(&child, &unrelated, &versions),
            Err(StoreError::NotAncestor { .. })
        ));
    }
}
