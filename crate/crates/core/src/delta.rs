//! Policy-update analysis over dual-labeled golden sets.
//!
//! When a policy changes, the same items are relabeled under the new version.
//! [`policy_delta`] compares the two label sets and never looks at agent
//! decisions; [`rebenchmark`] scores agents against the new labels only.

use std::collections::BTreeMap;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError, QualityReport};
use crate::model::{AgentDecision, GoldLabel, PolicyRef, PolicyVersion, Timestamp};
use crate::store::{assemble_version, check_labels, ContentPool, GdsVersion, StoreError};

#[derive(Debug, Error)]
pub enum DeltaError {
    #[error("both versions are under policy {0}; a delta needs two policy versions")]
    SamePolicyVersion(PolicyRef),
    #[error("versions belong to different policies ({0} vs {1})")]
    DifferentPolicyFamily(PolicyRef, PolicyRef),
    #[error("golden set is under {version}, policy {given} was supplied")]
    PolicyMismatch { version: PolicyRef, given: PolicyRef },
    #[error("label `{label}` on item `{item_id}` is not in the policy's label set")]
    UnknownLabel { item_id: String, label: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("agent `{agent_id}`: {source}")]
    Metrics {
        agent_id: String,
        source: MetricsError,
    },
}

impl DeltaError {
    pub fn code(&self) -> &'static str {
        match self {
            DeltaError::SamePolicyVersion(_) => "same_policy_version",
            DeltaError::DifferentPolicyFamily(..) => "different_policy_family",
            DeltaError::PolicyMismatch { .. } => "policy_mismatch",
            DeltaError::UnknownLabel { .. } => "unknown_label",
            DeltaError::Store(e) => e.code(),
            DeltaError::Metrics { source, .. } => source.code(),
        }
    }
}

pub type Result<T, E = DeltaError> = std::result::Result<T, E>;

/// `counts[i][j]`: items labeled `old_labels[i]` under the old version and
/// `new_labels[j]` under the new one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub old_policy: PolicyRef,
    pub new_policy: PolicyRef,
    pub old_labels: Vec<String>,
    pub new_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Items only in the old version.
    pub unmatched_old: u64,
    /// Items only in the new version.
    pub unmatched_new: u64,
}

impl TransitionMatrix {
    pub fn matched(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, old: &str, new: &str) -> u64 {
        let i = self.old_labels.iter().position(|l| l == old);
        let j = self.new_labels.iter().position(|l| l == new);
        match (i, j) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }
}

fn check_pair(version: &GdsVersion, policy: &PolicyVersion) -> Result<()> {
    if version.policy != policy.reference() {
        return Err(DeltaError::PolicyMismatch {
            version: version.policy.clone(),
            given: policy.reference(),
        });
    }
    Ok(())
}

/// Transition structure of gold labels between two versions of one policy,
/// over the items both versions contain.
pub fn policy_delta(
    v1: &GdsVersion,
    p1: &PolicyVersion,
    v2: &GdsVersion,
    p2: &PolicyVersion,
) -> Result<TransitionMatrix> {
    check_pair(v1, p1)?;
    check_pair(v2, p2)?;
    if v1.policy.policy_id != v2.policy.policy_id {
        return Err(DeltaError::DifferentPolicyFamily(
            v1.policy.clone(),
            v2.policy.clone(),
        ));
    }
    if v1.policy.version == v2.policy.version {
        return Err(DeltaError::SamePolicyVersion(v1.policy.clone()));
    }
    let index = |policy: &PolicyVersion, label: &GoldLabel| {
        policy
            .label_index(&label.label)
            .ok_or_else(|| DeltaError::UnknownLabel {
                item_id: label.item_id.clone(),
                label: label.label.clone(),
            })
    };
    let mut counts = vec![vec![0u64; p2.label_set.len()]; p1.label_set.len()];
    let mut unmatched_old = 0;
    for (item, old) in &v1.records {
        let i = index(p1, old)?;
        match v2.records.get(item) {
            Some(new) => counts[i][index(p2, new)?] += 1,
            None => unmatched_old += 1,
        }
    }
    let mut unmatched_new = 0;
    for (item, new) in &v2.records {
        index(p2, new)?;
        if !v1.records.contains_key(item) {
            unmatched_new += 1;
        }
    }
    Ok(TransitionMatrix {
        old_policy: v1.policy.clone(),
        new_policy: v2.policy.clone(),
        old_labels: p1.label_set.clone(),
        new_labels: p2.label_set.clone(),
        counts,
        unmatched_old,
        unmatched_new,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: usize,
    pub target: usize,
    pub value: u64,
}

/// Flow document: `nodes` are `label@v<old>` entries followed by
/// `label@v<new>` entries, links index into `nodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyDocument {
    pub nodes: Vec<String>,
    pub links: Vec<SankeyLink>,
}

pub fn sankey_export(t: &TransitionMatrix) -> SankeyDocument {
    let old = t
        .old_labels
        .iter()
        .map(|l| format!("{l}@v{}", t.old_policy.version));
    let new = t
        .new_labels
        .iter()
        .map(|l| format!("{l}@v{}", t.new_policy.version));
    let nodes: Vec<String> = old.chain(new).collect();
    let offset = t.old_labels.len();
    let links = t
        .counts
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v > 0)
                .map(move |(j, v)| SankeyLink {
                    source: i,
                    target: offset + j,
                    value: *v,
                })
        })
        .collect();
    SankeyDocument { nodes, links }
}

/// Scores every agent against the new version's labels only.
pub fn rebenchmark(
    agents: &BTreeMap<String, Vec<AgentDecision>>,
    v2: &GdsVersion,
    p2: &PolicyVersion,
) -> Result<BTreeMap<String, QualityReport<f64>>> {
    agents
        .iter()
        .map(|(agent_id, decisions)| {
            let wrap = |source| DeltaError::Metrics {
                agent_id: agent_id.clone(),
                source,
            };
            let scored = metrics::confusion(decisions, v2, p2).map_err(wrap)?;
            let report = metrics::quality_report(scored.counts).map_err(wrap)?;
            Ok((agent_id.clone(), report))
        })
        .collect()
}

/// Publishes the relabeled set under a new policy version. The result keeps
/// `v1` as its parent for lineage but inherits none of its labels.
pub fn publish_relabel(
    pool: &ContentPool,
    v1: &GdsVersion,
    labels: Vec<GoldLabel>,
    p2: &PolicyVersion,
) -> Result<GdsVersion> {
    publish_relabel_at(pool, v1, labels, p2, Utc::now())
}

pub fn publish_relabel_at(
    pool: &ContentPool,
    v1: &GdsVersion,
    labels: Vec<GoldLabel>,
    p2: &PolicyVersion,
    created_at: Timestamp,
) -> Result<GdsVersion> {
    if v1.policy.policy_id != p2.policy_id {
        return Err(DeltaError::DifferentPolicyFamily(
            v1.policy.clone(),
            p2.reference(),
        ));
    }
    if v1.policy.version == p2.version {
        return Err(DeltaError::SamePolicyVersion(v1.policy.clone()));
    }
    if labels.is_empty() {
        return Err(StoreError::EmptyPublish.into());
    }
    let records = check_labels(pool, labels, p2)?;
    Ok(assemble_version(
        Some(v1.version_id.clone()),
        p2.reference(),
        records,
        created_at,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_epoch;

    fn version(labels: &[(&str, &str)], policy: &PolicyVersion) -> GdsVersion {
        let records = labels
            .iter()
            .map(|(id, l)| {
                (
                    id.to_string(),
                    GoldLabel {
                        item_id: id.to_string(),
                        policy: policy.reference(),
                        label: l.to_string(),
                        sme_id: "sme".into(),
                        adjudicated: true,
                    },
                )
            })
            .collect();
        assemble_version(None, policy.reference(), records, reference_epoch())
    }

    #[test]
    fn hand_paired_delta() {
        let (p1, p2) = (PolicyVersion::binary("adult", 1), PolicyVersion::binary("adult", 2));
        let v1 = version(&[("a", "positive"), ("b", "positive"), ("c", "negative")], &p1);
        let v2 = version(&[("a", "positive"), ("b", "negative"), ("c", "negative")], &p2);
        let t = policy_delta(&v1, &p1, &v2, &p2).unwrap();
        assert_eq!(t.counts, vec![vec![1, 1], vec![0, 1]]);
        let doc = sankey_export(&t);
        assert_eq!(
            doc.nodes,
            vec!["positive@v1", "negative@v1", "positive@v2", "negative@v2"]
        );
        assert_eq!(doc.links.len(), 3);
        assert!(doc.links.iter().all(|l| l.value == 1));
    }

    #[test]
    fn identical_labels_give_diagonal() {
        let (p1, p2) = (PolicyVersion::binary("adult", 1), PolicyVersion::binary("adult", 2));
        let labels = [("a", "positive"), ("b", "negative"), ("c", "negative")];
        let t = policy_delta(&version(&labels, &p1), &p1, &version(&labels, &p2), &p2).unwrap();
        assert_eq!(t.counts, vec![vec![1, 0], vec![0, 2]]);
        let doc = sankey_export(&t);
        assert_eq!(
            doc.links,
            vec![
                SankeyLink { source: 0, target: 2, value: 1 },
                SankeyLink { source: 1, target: 3, value: 2 },
            ]
        );
    }

    #[test]
    fn missing_items_are_unmatched() {
        let (p1, p2) = (PolicyVersion::binary("adult", 1), PolicyVersion::binary("adult", 2));
        let v1 = version(&[("a", "positive"), ("b", "positive"), ("c", "negative")], &p1);
        let v2 = version(&[("a", "positive"), ("b", "negative")], &p2);
        let t = policy_delta(&v1, &p1, &v2, &p2).unwrap();
        assert_eq!(t.unmatched_old, 1);
        assert_eq!(t.unmatched_new, 0);
        assert_eq!(t.matched(), 2);
    }

    #[test]
    fn empty_intersection_has_no_links() {
        let (p1, p2) = (PolicyVersion::binary("adult", 1), PolicyVersion::binary("adult", 2));
        let t = policy_delta(
            &version(&[("a", "positive")], &p1),
            &p1,
            &version(&[("b", "negative")], &p2),
            &p2,
        )
        .unwrap();
        let doc = sankey_export(&t);
        assert_eq!(doc.nodes.len(), 4);
        assert!(doc.links.is_empty());
    }

    #[test]
    fn policy_preconditions() {
        let p1 = PolicyVersion::binary("adult", 1);
        let v1 = version(&[("a", "positive")], &p1);
        assert!(matches!(
            policy_delta(&v1, &p1, &v1, &p1),
            Err(DeltaError::SamePolicyVersion(_))
        ));
        let other = PolicyVersion::binary("spam", 2);
        let vo = version(&[("a", "positive")], &other);
        assert!(matches!(
            policy_delta(&v1, &p1, &vo, &other),
            Err(DeltaError::DifferentPolicyFamily(..))
        ));
    }

    #[test]
    fn direction_matters() {
        let (p1, p2) = (PolicyVersion::binary("adult", 1), PolicyVersion::binary("adult", 2));
        let v1 = version(&[("a", "positive"), ("b", "positive")], &p1);
        let v2 = version(&[("a", "negative"), ("b", "positive")], &p2);
        let forward = policy_delta(&v1, &p1, &v2, &p2).unwrap();
        let backward = policy_delta(&v2, &p2, &v1, &p1).unwrap();
        assert_ne!(forward.counts, backward.counts);
    }
}
