//! On-disk layout of a data directory.
//!
//! ```text
//! <root>/pool.jsonl, versions/, policies/   core store
//! <root>/batches/<batch_id>.json            sampling batch and its label tasks
//! <root>/agents/<agent_id>.jsonl            recorded agent decisions
//! <root>/monitors/baselines/<agent>.json    monitor baselines
//! <root>/monitors/alerts.jsonl              append-only alert log
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::DateTime;
use goldset_core::model::{AgentDecision, PolicyRef, Timestamp};
use goldset_core::monitor::MonitorBaseline;
use goldset_core::sampler::{SamplingBatch, Strategy, TrainingMeta};
use goldset_core::store::{write_atomic, Store};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// Environment variable holding a fixed RFC 3339 timestamp for publishes.
pub const CLOCK_ENV: &str = "GOLDSET_CLOCK";

/// Source of publish timestamps; fixed clocks make runs reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Clock {
    pub fixed: Option<Timestamp>,
}

impl Clock {
    pub fn fixed(at: Timestamp) -> Self {
        Clock { fixed: Some(at) }
    }

    pub fn from_env() -> Result<Self> {
        match std::env::var(CLOCK_ENV) {
            Ok(text) if !text.is_empty() => Ok(Clock::fixed(parse_timestamp(&text)?)),
            _ => Ok(Clock::default()),
        }
    }

    pub fn now(&self) -> Timestamp {
        self.fixed.unwrap_or_else(chrono::Utc::now)
    }
}

pub fn parse_timestamp(text: &str) -> Result<Timestamp> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.to_utc())
        .map_err(|e| ServiceError::invalid("bad_timestamp", format!("`{text}`: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Labeled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTask {
    pub task_id: String,
    pub item_id: String,
    pub policy: PolicyRef,
    pub batch_id: String,
    pub status: TaskStatus,
    pub label: Option<String>,
    pub sme_id: Option<String>,
    /// Key of the request that resolved the task; replays return the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: String,
    /// Golden set the batch was sampled against, if any.
    pub gds: Option<String>,
    pub policy: PolicyRef,
    pub strategy: Strategy,
    pub sampling: SamplingBatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
    pub tasks: Vec<LabelTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
}

impl Batch {
    pub fn pending(&self) -> usize {
        self.count(TaskStatus::Pending)
    }

    pub fn count(&self, status: TaskStatus) -> usize {
        self.tasks.iter().filter(|t| t.status == status).count()
    }

    pub fn summary(&self) -> BatchSummary {
        BatchSummary {
            batch_id: self.batch_id.clone(),
            gds: self.gds.clone(),
            policy: self.policy.clone(),
            total: self.tasks.len(),
            pending: self.pending(),
            labeled: self.count(TaskStatus::Labeled),
            skipped: self.count(TaskStatus::Skipped),
            published: self.published.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: String,
    pub gds: Option<String>,
    pub policy: PolicyRef,
    pub total: usize,
    pub pending: usize,
    pub labeled: usize,
    pub skipped: usize,
    pub published: Option<String>,
}

/// Splits `batch-0001:0003` into the batch id.
pub fn batch_of_task(task_id: &str) -> Option<&str> {
    task_id.rsplit_once(':').map(|(batch, _)| batch)
}

/// Rejects names that could escape their directory.
fn check_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '@'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::invalid(
            "bad_name",
            format!("{kind} `{name}` may only use letters, digits, '-', '_', '.', '@'"),
        ))
    }
}

fn to_pretty(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)
        .map_err(|e| ServiceError::from(e).with_context(&path.display().to_string()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            ServiceError::invalid("bad_json", format!("{}:{}: {e}", path.display(), n + 1))
        })?);
    }
    Ok(out)
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)
        .map_err(|e| ServiceError::from(e).with_context(&path.display().to_string()))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| ServiceError::invalid("bad_json", format!("{}: {e}", path.display())))
}

impl ServiceError {
    fn with_context(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    store: Store,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let store = Store::open(root)?;
        for dir in ["batches", "agents", "monitors/baselines"] {
            fs::create_dir_all(store.root().join(dir))?;
        }
        Ok(Workspace { store })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn root(&self) -> &Path {
        self.store.root()
    }

    fn batch_path(&self, batch_id: &str) -> PathBuf {
        self.root().join("batches").join(format!("{batch_id}.json"))
    }

    pub fn next_batch_id(&self) -> Result<String> {
        let existing = fs::read_dir(self.root().join("batches"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count();
        Ok(format!("batch-{:04}", existing + 1))
    }

    pub fn load_batch(&self, batch_id: &str) -> Result<Batch> {
        check_name("batch id", batch_id)?;
        let path = self.batch_path(batch_id);
        if !path.exists() {
            return Err(ServiceError::not_found(
                "batch_not_found",
                format!("batch `{batch_id}` not found"),
            ));
        }
        read_json(&path)
    }

    pub fn save_batch(&self, batch: &Batch) -> Result<()> {
        check_name("batch id", &batch.batch_id)?;
        write_atomic(&self.batch_path(&batch.batch_id), &to_pretty(batch)?)?;
        Ok(())
    }

    fn agent_path(&self, agent_id: &str) -> Result<PathBuf> {
        check_name("agent id", agent_id)?;
        Ok(self.root().join("agents").join(format!("{agent_id}.jsonl")))
    }

    /// Replaces the recorded decisions of one agent, sorted by item.
    pub fn save_decisions(&self, agent_id: &str, decisions: &[AgentDecision]) -> Result<()> {
        let mut rows = decisions.to_vec();
        rows.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        write_atomic(&self.agent_path(agent_id)?, &jsonl_bytes(&rows)?)?;
        Ok(())
    }

    pub fn load_decisions(&self, agent_id: &str) -> Result<Vec<AgentDecision>> {
        let path = self.agent_path(agent_id)?;
        if !path.exists() {
            return Err(ServiceError::not_found(
                "agent_not_found",
                format!("no decisions recorded for agent `{agent_id}`"),
            ));
        }
        read_jsonl(&path)
    }

    fn baseline_path(&self, agent_id: &str) -> Result<PathBuf> {
        check_name("agent id", agent_id)?;
        Ok(self
            .root()
            .join("monitors/baselines")
            .join(format!("{agent_id}.json")))
    }

    pub fn save_baseline(&self, baseline: &MonitorBaseline) -> Result<()> {
        write_atomic(&self.baseline_path(&baseline.agent_id)?, &to_pretty(baseline)?)?;
        Ok(())
    }

    pub fn load_baseline(&self, agent_id: &str) -> Result<MonitorBaseline> {
        let path = self.baseline_path(agent_id)?;
        if !path.exists() {
            return Err(ServiceError::not_found(
                "baseline_not_found",
                format!("no monitor baseline for agent `{agent_id}`"),
            ));
        }
        read_json(&path)
    }

    pub fn alert_log(&self) -> PathBuf {
        self.root().join("monitors/alerts.jsonl")
    }
}
