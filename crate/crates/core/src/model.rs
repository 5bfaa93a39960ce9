//! Domain types shared across the framework: content items, policies, gold
//! labels and agent decisions.
//!
//! All types serialize to canonical JSON with lower_snake_case field names.
//! Timestamps are ISO-8601 UTC strings.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of first-layer semantic codes.
pub const CODEBOOK_SIZE: usize = 256;

/// Default embedding dimension for a deployment.
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("label `{label}` is not in the label set of policy {policy}")]
    UnknownLabel { label: String, policy: PolicyRef },
    #[error("decision references policy {found} but {expected} was expected")]
    PolicyMismatch { expected: PolicyRef, found: PolicyRef },
    #[error("semantic code {0} is outside [0, 255]")]
    CodeOutOfRange(u32),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("cannot parse policy reference `{0}`, expected <policy_id>@<version>")]
    BadPolicyRef(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::UnknownLabel { .. } => "unknown_label",
            ModelError::PolicyMismatch { .. } => "policy_mismatch",
            ModelError::CodeOutOfRange(_) => "code_out_of_range",
            ModelError::InvalidPolicy(_) => "invalid_policy",
            ModelError::BadPolicyRef(_) => "bad_policy_ref",
        }
    }
}

/// First-layer semantic code.
///
/// Stored wide so that out-of-range codes arriving from files can be detected
/// and reported instead of failing at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticCode(u32);

impl SemanticCode {
    pub fn new(code: u32) -> Result<Self, ModelError> {
        let code = SemanticCode(code);
        code.check()?;
        Ok(code)
    }

    pub fn from_index(index: u8) -> Self {
        SemanticCode(u32::from(index))
    }

    pub fn check(self) -> Result<(), ModelError> {
        if (self.0 as usize) < CODEBOOK_SIZE {
            Ok(())
        } else {
            Err(ModelError::CodeOutOfRange(self.0))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Bin index; only meaningful for a checked code.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    UserReport,
    PrevalenceSample,
    Synthetic,
    FileImport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub item_id: String,
    pub embedding: Embedding,
    pub code: SemanticCode,
    pub source: Source,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Pin,
    Image,
    Text,
}

/// `(policy_id, version)` pair identifying one immutable policy revision.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolicyRef {
    pub policy_id: String,
    pub version: u32,
}

impl PolicyRef {
    pub fn new(policy_id: impl Into<String>, version: u32) -> Self {
        PolicyRef {
            policy_id: policy_id.into(),
            version,
        }
    }
}

impl fmt::Display for PolicyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.policy_id, self.version)
    }
}

impl FromStr for PolicyRef {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (id, version) = s
            .rsplit_once('@')
            .ok_or_else(|| ModelError::BadPolicyRef(s.to_string()))?;
        let version = version
            .trim_start_matches('v')
            .parse::<u32>()
            .map_err(|_| ModelError::BadPolicyRef(s.to_string()))?;
        if id.is_empty() || version == 0 {
            return Err(ModelError::BadPolicyRef(s.to_string()));
        }
        Ok(PolicyRef::new(id, version))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyVersion {
    pub policy_id: String,
    pub version: u32,
    pub entity_type: EntityType,
    pub label_set: Vec<String>,
    pub guideline_digest: String,
}

impl PolicyVersion {
    pub fn new(
        policy_id: impl Into<String>,
        version: u32,
        entity_type: EntityType,
        label_set: Vec<String>,
        guideline_text: &str,
    ) -> Result<Self, ModelError> {
        let policy = PolicyVersion {
            policy_id: policy_id.into(),
            version,
            entity_type,
            label_set,
            guideline_digest: hex::encode(Sha256::digest(guideline_text.as_bytes())),
        };
        policy.check()?;
        Ok(policy)
    }

    /// A binary `[positive, negative]` policy.
    pub fn binary(policy_id: impl Into<String>, version: u32) -> Self {
        let policy_id = policy_id.into();
        let text = format!("{policy_id} v{version}");
        Self::new(
            policy_id,
            version,
            EntityType::Pin,
            vec!["positive".into(), "negative".into()],
            &text,
        )
        .expect("binary policy is valid")
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.policy_id.is_empty() || self.policy_id.contains('@') {
            return Err(ModelError::InvalidPolicy(format!(
                "bad policy id `{}`",
                self.policy_id
            )));
        }
        if self.version == 0 {
            return Err(ModelError::InvalidPolicy("version must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &self.label_set {
            if !seen.insert(label.as_str()) {
                return Err(ModelError::InvalidPolicy(format!("duplicate label `{label}`")));
            }
        }
        if seen.len() < 2 {
            return Err(ModelError::InvalidPolicy(
                "label_set needs at least two labels".into(),
            ));
        }
        Ok(())
    }

    pub fn reference(&self) -> PolicyRef {
        PolicyRef::new(self.policy_id.clone(), self.version)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_set.iter().any(|l| l == label)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    pub fn is_binary(&self) -> bool {
        self.label_set.len() == 2
    }

    /// Positive class for binary metrics is the first label.
    pub fn positive_label(&self) -> &str {
        &self.label_set[0]
    }

    pub fn check_label(&self, label: &str) -> Result<(), ModelError> {
        if self.has_label(label) {
            Ok(())
        } else {
            Err(ModelError::UnknownLabel {
                label: label.to_string(),
                policy: self.reference(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub item_id: String,
    pub policy: PolicyRef,
    pub label: String,
    pub sme_id: String,
    pub adjudicated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub agent_id: String,
    pub run_id: String,
    pub item_id: String,
    pub policy: PolicyRef,
    pub label: String,
    pub decided_at: Timestamp,
}

/// Checks a decision against the policy it claims to follow.
pub fn validate_decision(
    decision: AgentDecision,
    policy: &PolicyVersion,
) -> Result<AgentDecision, ModelError> {
    if decision.policy != policy.reference() {
        return Err(ModelError::PolicyMismatch {
            expected: policy.reference(),
            found: decision.policy,
        });
    }
    policy.check_label(&decision.label)?;
    Ok(decision)
}

/// Fixed timestamp stamped on simulated and test artifacts.
pub fn reference_epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}
