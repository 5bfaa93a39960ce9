//! Operations shared by the CLI and the HTTP API. Both surfaces call these
//! and nothing else mutates the data directory, which keeps their on-disk
//! results identical for the same sequence of requests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use goldset_core::delta::{policy_delta, publish_relabel_at, sankey_export, SankeyDocument, TransitionMatrix};
use goldset_core::metrics::{
    self, decision_kappa, profile_against, relative_report_between, semantic_coverage,
    DatasetProfile, KappaResult, QualityReport, RelativeReport,
};
use goldset_core::model::{AgentDecision, ContentItem, GoldLabel, PolicyRef, PolicyVersion, Timestamp};
use goldset_core::monitor::{
    append_alert, drift_check, stability_check, AlertReason, AlertResult, AlertStatus,
    MonitorBaseline, MonitorConfig,
};
use goldset_core::sampler::{
    select_batch, select_scored, train_propensity, ModelKind, PropensityConfig, SamplingBatch,
    SamplingMode, Strategy,
};
use goldset_core::store::{IngestReport, Manifest};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::workspace::{batch_of_task, Batch, LabelTask, TaskStatus, Workspace};

pub fn ingest(ws: &Workspace, items: Vec<ContentItem>) -> Result<IngestReport> {
    Ok(ws.store().ingest(items)?.1)
}

pub fn add_policy(ws: &Workspace, policy: &PolicyVersion) -> Result<PolicyRef> {
    ws.store().register_policy(policy)?;
    Ok(policy.reference())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    /// Golden set to expand; without one the batch is drawn uniformly.
    #[serde(default)]
    pub gds: Option<String>,
    /// Required when `gds` is absent; otherwise must match the golden set.
    #[serde(default)]
    pub policy: Option<PolicyRef>,
    pub k: usize,
    #[serde(default)]
    pub mode: SamplingMode,
    /// Defaults to propensity sampling when a golden set is given.
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub seed: u64,
}

pub fn sample(ws: &Workspace, req: &SampleRequest) -> Result<Batch> {
    let store = ws.store();
    let pool = store.load_pool()?;
    if pool.is_empty() {
        return Err(ServiceError::invalid("empty_pool", "the content pool is empty"));
    }
    let gds = req.gds.as_deref().map(|id| store.get_version(id)).transpose()?;
    let policy = match (&req.policy, &gds) {
        (Some(p), Some(g)) if *p != g.policy => {
            return Err(ServiceError::invalid(
                "policy_mismatch",
                format!("golden set is under {}, batch requested {p}", g.policy),
            ))
        }
        (Some(p), _) => p.clone(),
        (None, Some(g)) => g.policy.clone(),
        (None, None) => {
            return Err(ServiceError::invalid(
                "policy_required",
                "a policy is required when sampling without a golden set",
            ))
        }
    };
    store.policy(&policy)?;
    let strategy = match (req.strategy, &gds) {
        (Some(Strategy::Propensity), None) => {
            return Err(ServiceError::invalid(
                "gds_required",
                "propensity sampling needs a golden set",
            ))
        }
        (Some(s), _) => s,
        (None, Some(_)) => Strategy::Propensity,
        (None, None) => Strategy::Uniform,
    };

    let (sampling, training) = match (strategy, &gds) {
        (Strategy::Propensity, Some(g)) => {
            let config = match req.model.unwrap_or(ModelKind::Logistic) {
                ModelKind::Logistic => PropensityConfig::default(),
                ModelKind::BoostedStumps => PropensityConfig::boosted_stumps(),
            };
            let config = PropensityConfig {
                seed: req.seed,
                ..config
            };
            let model = train_propensity(&pool, g, &config)?;
            let batch = select_batch(&pool, g, &model, req.k, req.mode, req.seed)?;
            (batch, Some(model.training_meta))
        }
        _ => {
            if req.k == 0 {
                return Err(goldset_core::sampler::SamplerError::ZeroBatch.into());
            }
            // Equal scores give equal weights, so weighted selection is uniform.
            let candidates: Vec<(&str, f64)> = pool
                .items()
                .filter(|i| !gds.as_ref().is_some_and(|g| g.contains(&i.item_id)))
                .map(|i| (i.item_id.as_str(), 0.0))
                .collect();
            if candidates.is_empty() {
                return Err(goldset_core::sampler::SamplerError::EmptyCandidates.into());
            }
            let (picked, weights_digest) =
                select_scored(&candidates, req.k, SamplingMode::Weighted, req.seed);
            let batch = SamplingBatch {
                selected: picked.into_iter().map(|i| candidates[i].0.to_string()).collect(),
                mode: SamplingMode::Weighted,
                seed: req.seed,
                weights_digest,
            };
            (batch, None)
        }
    };

    let batch_id = ws.next_batch_id()?;
    let tasks = sampling
        .selected
        .iter()
        .enumerate()
        .map(|(i, item_id)| LabelTask {
            task_id: format!("{batch_id}:{:04}", i + 1),
            item_id: item_id.clone(),
            policy: policy.clone(),
            batch_id: batch_id.clone(),
            status: TaskStatus::Pending,
            label: None,
            sme_id: None,
            idempotency_key: None,
        })
        .collect();
    let batch = Batch {
        batch_id,
        gds: req.gds.clone(),
        policy,
        strategy,
        sampling,
        training,
        tasks,
        published: None,
    };
    ws.save_batch(&batch)?;
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub label: String,
    pub sme_id: String,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

/// Applies a label to a task held in memory. Returns whether it changed.
fn apply_label(task: &mut LabelTask, policy: &PolicyVersion, req: &LabelRequest) -> Result<bool> {
    if req.idempotency_key.is_some() && task.idempotency_key == req.idempotency_key {
        return Ok(false);
    }
    if task.status != TaskStatus::Pending {
        return Err(ServiceError::conflict(
            "task_not_pending",
            format!("task `{}` is already {:?}", task.task_id, task.status).to_lowercase(),
        ));
    }
    if !policy.has_label(&req.label) {
        return Err(ServiceError::invalid(
            "invalid_label",
            format!(
                "label `{}` is not one of {:?} under {}",
                req.label,
                policy.label_set,
                policy.reference()
            ),
        ));
    }
    if req.sme_id.trim().is_empty() {
        return Err(ServiceError::invalid("missing_sme_id", "sme_id must not be empty"));
    }
    task.status = TaskStatus::Labeled;
    task.label = Some(req.label.clone());
    task.sme_id = Some(req.sme_id.clone());
    task.idempotency_key = req.idempotency_key.clone();
    Ok(true)
}

fn unknown_task(task_id: &str) -> ServiceError {
    ServiceError::not_found("task_not_found", format!("task `{task_id}` not found"))
}

pub fn label_task(ws: &Workspace, task_id: &str, req: &LabelRequest) -> Result<LabelTask> {
    let batch_id = batch_of_task(task_id).ok_or_else(|| unknown_task(task_id))?;
    let mut batch = ws.load_batch(batch_id).map_err(|_| unknown_task(task_id))?;
    let policy = ws.store().policy(&batch.policy)?;
    let task = batch
        .tasks
        .iter_mut()
        .find(|t| t.task_id == task_id)
        .ok_or_else(|| unknown_task(task_id))?;
    let changed = apply_label(task, &policy, req)?;
    let task = task.clone();
    if changed {
        ws.save_batch(&batch)?;
    }
    Ok(task)
}

/// One line of a label import file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub item_id: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub sme_id: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
    #[serde(default)]
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub batch_id: String,
    pub labeled: usize,
    pub skipped: usize,
    pub unchanged: usize,
    pub ignored: usize,
    pub pending: usize,
}

/// Fills tasks of a batch from label lines. Lines for items outside the
/// batch are counted as ignored. All or nothing: any invalid line aborts the
/// whole import.
pub fn import_labels(ws: &Workspace, batch_id: &str, lines: &[LabelLine]) -> Result<ImportReport> {
    let mut batch = ws.load_batch(batch_id)?;
    let policy = ws.store().policy(&batch.policy)?;
    let position: BTreeMap<String, usize> = batch
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.item_id.clone(), i))
        .collect();
    let (mut labeled, mut skipped, mut unchanged, mut ignored) = (0, 0, 0, 0);
    for line in lines {
        let Some(&i) = position.get(&line.item_id) else {
            ignored += 1;
            continue;
        };
        let task = &mut batch.tasks[i];
        if line.skip {
            match task.status {
                TaskStatus::Pending => {
                    task.status = TaskStatus::Skipped;
                    skipped += 1;
                }
                TaskStatus::Skipped => unchanged += 1,
                TaskStatus::Labeled => {
                    return Err(ServiceError::conflict(
                        "task_not_pending",
                        format!("task `{}` is already labeled", task.task_id),
                    ))
                }
            }
            continue;
        }
        let req = LabelRequest {
            label: line.label.clone().ok_or_else(|| {
                ServiceError::invalid(
                    "missing_label",
                    format!("line for `{}` has neither a label nor skip", line.item_id),
                )
            })?,
            sme_id: line.sme_id.clone().unwrap_or_default(),
            idempotency_key: line.idempotency_key.clone(),
        };
        // A replayed import of the same label is not a conflict.
        if line.idempotency_key.is_none()
            && task.status == TaskStatus::Labeled
            && task.label.as_deref() == Some(req.label.as_str())
            && task.sme_id.as_deref() == Some(req.sme_id.as_str())
        {
            unchanged += 1;
            continue;
        }
        if apply_label(task, &policy, &req)? {
            labeled += 1;
        } else {
            unchanged += 1;
        }
    }
    if labeled + skipped > 0 {
        ws.save_batch(&batch)?;
    }
    Ok(ImportReport {
        batch_id: batch.batch_id.clone(),
        labeled,
        skipped,
        unchanged,
        ignored,
        pending: batch.pending(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishRequest {
    /// Defaults to the golden set the batch was sampled against.
    #[serde(default)]
    pub parent: Option<String>,
    /// Defaults to the batch policy; must match it when given.
    #[serde(default)]
    pub policy: Option<PolicyRef>,
    #[serde(default)]
    pub allow_partial: bool,
}

pub fn publish_batch(
    ws: &Workspace,
    batch_id: &str,
    req: &PublishRequest,
    created_at: Timestamp,
) -> Result<Manifest> {
    let mut batch = ws.load_batch(batch_id)?;
    let pending = batch.pending();
    if pending > 0 && !req.allow_partial {
        return Err(ServiceError::conflict(
            "pending_tasks",
            format!("batch `{batch_id}` still has {pending} pending task(s)"),
        ));
    }
    let policy = req.policy.clone().unwrap_or_else(|| batch.policy.clone());
    if policy != batch.policy {
        return Err(ServiceError::invalid(
            "policy_mismatch",
            format!("batch `{batch_id}` was labeled under {}, not {policy}", batch.policy),
        ));
    }
    let parent = req.parent.clone().or_else(|| batch.gds.clone());
    let labels = batch
        .tasks
        .iter()
        .filter(|t| t.status == TaskStatus::Labeled)
        .map(|t| GoldLabel {
            item_id: t.item_id.clone(),
            policy: policy.clone(),
            label: t.label.clone().unwrap_or_default(),
            sme_id: t.sme_id.clone().unwrap_or_default(),
            adjudicated: false,
        })
        .collect();
    let version = ws
        .store()
        .publish(parent.as_deref(), labels, &policy, created_at)?;
    if batch.published.as_deref() != Some(version.version_id.as_str()) {
        batch.published = Some(version.version_id.clone());
        ws.save_batch(&batch)?;
    }
    Ok(version.manifest())
}

pub fn publish_labels(
    ws: &Workspace,
    parent: Option<&str>,
    labels: Vec<GoldLabel>,
    policy: &PolicyRef,
    created_at: Timestamp,
) -> Result<Manifest> {
    let store = ws.store();
    if let Some(parent_id) = parent {
        let base = store.get_version(parent_id)?;
        // A parent under another version of the same policy is a relabel.
        if base.policy.policy_id == policy.policy_id && base.policy.version != policy.version {
            let p2 = store.policy(policy)?;
            let version = publish_relabel_at(&store.load_pool()?, &base, labels, &p2, created_at)?;
            return Ok(store.persist(&version)?.manifest());
        }
    }
    Ok(store.publish(parent, labels, policy, created_at)?.manifest())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileOutput {
    pub version_id: String,
    pub policy: PolicyRef,
    pub item_count: usize,
    pub profile: DatasetProfile,
}

pub fn profile(ws: &Workspace, version_id: &str, production: Option<&[ContentItem]>) -> Result<ProfileOutput> {
    let store = ws.store();
    let gds = store.get_version(version_id)?;
    let pool = store.load_pool()?;
    let items: Vec<&ContentItem> = gds.item_ids().filter_map(|id| pool.get(id)).collect();
    let profile = match production {
        Some(prod) => profile_against(items.iter().copied(), prod)?,
        None => semantic_coverage(items.iter().copied()),
    };
    Ok(ProfileOutput {
        version_id: gds.version_id.clone(),
        policy: gds.policy.clone(),
        item_count: gds.item_count,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub agent_id: String,
    pub gds: String,
    pub report: QualityReport<f64>,
    /// Decisions scored against the golden set.
    pub scored: usize,
    /// Golden-set items the agent made no decision on.
    pub uncovered: usize,
    /// Decisions on items outside the golden set, which are not scored.
    pub outside_gds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative: Option<RelativeReport<f64>>,
}

/// A stored baseline: either a bare report or a previous evaluate output.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BaselineInput {
    Evaluation(Box<EvaluateOutput>),
    Report(QualityReport<f64>),
}

impl BaselineInput {
    fn parts(&self) -> (&str, &QualityReport<f64>) {
        match self {
            BaselineInput::Evaluation(e) => (&e.agent_id, &e.report),
            BaselineInput::Report(r) => ("baseline", r),
        }
    }
}

fn single_agent(decisions: &[AgentDecision]) -> Result<String> {
    let agents: BTreeSet<&str> = decisions.iter().map(|d| d.agent_id.as_str()).collect();
    match agents.len() {
        0 => Err(ServiceError::invalid("empty_input", "no decisions given")),
        1 => Ok(agents.into_iter().next().unwrap_or_default().to_string()),
        _ => Err(ServiceError::invalid(
            "mixed_agents",
            format!("decisions come from several agents: {agents:?}"),
        )),
    }
}

pub fn evaluate(
    ws: &Workspace,
    version_id: &str,
    decisions: &[AgentDecision],
    baseline: Option<&BaselineInput>,
) -> Result<EvaluateOutput> {
    let store = ws.store();
    let gds = store.get_version(version_id)?;
    let policy = store.policy(&gds.policy)?;
    let agent_id = single_agent(decisions)?;
    let inside: Vec<AgentDecision> = decisions
        .iter()
        .filter(|d| gds.contains(&d.item_id))
        .cloned()
        .collect();
    let (report, uncovered) = metrics::evaluate(&inside, &gds, &policy)?;
    let relative = baseline.map(|b| {
        let (base_id, base) = b.parts();
        relative_report_between(base_id, base, &agent_id, &report)
    });
    Ok(EvaluateOutput {
        agent_id,
        gds: gds.version_id.clone(),
        report,
        scored: inside.len(),
        uncovered,
        outside_gds: decisions.len() - inside.len(),
        relative,
    })
}

pub fn agree(a: &[AgentDecision], b: &[AgentDecision]) -> Result<KappaResult<f64>> {
    Ok(decision_kappa(a, b)?)
}

/// Records decisions under their agent ids, replacing earlier recordings.
pub fn record_decisions(ws: &Workspace, decisions: &[AgentDecision]) -> Result<BTreeMap<String, usize>> {
    let mut by_agent: BTreeMap<String, Vec<AgentDecision>> = BTreeMap::new();
    for d in decisions {
        by_agent.entry(d.agent_id.clone()).or_default().push(d.clone());
    }
    for (agent, rows) in &by_agent {
        ws.save_decisions(agent, rows)?;
    }
    Ok(by_agent.into_iter().map(|(a, rows)| (a, rows.len())).collect())
}

pub fn agent_report(ws: &Workspace, agent_id: &str, version_id: &str) -> Result<EvaluateOutput> {
    let decisions = ws.load_decisions(agent_id)?;
    evaluate(ws, version_id, &decisions, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaOutput {
    pub transition: TransitionMatrix,
    pub sankey: SankeyDocument,
}

pub fn delta(ws: &Workspace, v1: &str, v2: &str) -> Result<DeltaOutput> {
    let store = ws.store();
    let (old, new) = (store.get_version(v1)?, store.get_version(v2)?);
    let (p1, p2) = (store.policy(&old.policy)?, store.policy(&new.policy)?);
    let transition = policy_delta(&old, &p1, &new, &p2)?;
    let sankey = sankey_export(&transition);
    Ok(DeltaOutput { transition, sankey })
}

pub fn monitor_baseline(
    ws: &Workspace,
    agent_id: &str,
    config_digest: &str,
    version_id: &str,
    decisions: &[AgentDecision],
    created_at: Timestamp,
) -> Result<MonitorBaseline> {
    let store = ws.store();
    let pinned = store.get_version(version_id)?;
    let policy = store.policy(&pinned.policy)?;
    let own: Vec<AgentDecision> = decisions.iter().filter(|d| d.agent_id == agent_id).cloned().collect();
    let baseline = MonitorBaseline::establish(agent_id, config_digest, &own, &pinned, &policy, created_at)?;
    ws.save_baseline(&baseline)?;
    Ok(baseline)
}

/// Process exit code for a monitor outcome.
pub fn alert_exit_code(alert: &AlertResult) -> i32 {
    match (alert.status, alert.reason) {
        (AlertStatus::Pass, _) => 0,
        (AlertStatus::Alert, Some(AlertReason::InsufficientData)) => 3,
        (AlertStatus::Alert, _) => 2,
    }
}

pub fn monitor_drift(
    ws: &Workspace,
    agent_id: &str,
    child: &str,
    parent: &str,
    decisions: &[AgentDecision],
    config: &MonitorConfig,
) -> Result<AlertResult> {
    let store = ws.store();
    let baseline = ws.load_baseline(agent_id)?;
    let (child, parent) = (store.get_version(child)?, store.get_version(parent)?);
    let policy = store.policy(&child.policy)?;
    let own: Vec<AgentDecision> = decisions.iter().filter(|d| d.agent_id == agent_id).cloned().collect();
    let outcome = drift_check(&own, &child, &parent, store, &baseline, &policy, config)?;
    append_alert(&ws.alert_log(), &outcome.alert)?;
    Ok(outcome.alert)
}

pub fn monitor_stability(
    ws: &Workspace,
    agent_id: &str,
    config_digest: &str,
    decisions: &[AgentDecision],
    config: &MonitorConfig,
) -> Result<AlertResult> {
    let store = ws.store();
    let baseline = ws.load_baseline(agent_id)?;
    let pinned = store.get_version(&baseline.pinned_version)?;
    let policy = store.policy(&pinned.policy)?;
    let own: Vec<AgentDecision> = decisions.iter().filter(|d| d.agent_id == agent_id).cloned().collect();
    let outcome = stability_check(&own, &pinned, &baseline, config_digest, &policy, config)?;
    append_alert(&ws.alert_log(), &outcome.alert)?;
    Ok(outcome.alert)
}

pub fn read_items(path: &Path) -> Result<Vec<ContentItem>> {
    crate::workspace::read_jsonl(path)
}
