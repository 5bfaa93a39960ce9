//! Continuous validation of a production agent.
//!
//! Two tracks share one alert shape:
//!
//! * **drift** scores the agent only on items added since a parent version,
//!   asking whether quality holds up on new content;
//! * **stability** re-scores the agent on the exact version its baseline was
//!   established on, so with data and configuration fixed any significant
//!   change points at the serving system rather than the content.
//!
//! Deltas come with a percentile bootstrap interval over items.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    self, quality_report, relative_report_between, ConfusionCounts, MetricDelta, MetricName,
    MetricsError, QualityReport,
};
use crate::model::{AgentDecision, PolicyVersion, Timestamp};
use crate::simlab::substream_rng;
use crate::store::{new_items, GdsVersion, StoreError, VersionSource};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("baseline is pinned to `{expected}`, got version `{got}`")]
    PinnedMismatch { expected: String, got: String },
    #[error("decision for item `{0}` which is outside the pinned version")]
    OutsidePinned(String),
    #[error("invalid baseline: {0}")]
    InvalidBaseline(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MonitorError {
    pub fn code(&self) -> &'static str {
        match self {
            MonitorError::Store(e) => e.code(),
            MonitorError::Metrics(e) => e.code(),
            MonitorError::PinnedMismatch { .. } => "pinned_mismatch",
            MonitorError::OutsidePinned(_) => "outside_pinned",
            MonitorError::InvalidBaseline(_) => "invalid_baseline",
            MonitorError::Io(_) => "io",
            MonitorError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = MonitorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub primary_metric: MetricName,
    pub threshold_pp: f64,
    pub min_n: usize,
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self::drift()
    }
}

impl MonitorConfig {
    pub fn drift() -> Self {
        MonitorConfig {
            primary_metric: MetricName::Informedness,
            threshold_pp: 5.0,
            min_n: 50,
            resamples: 1_000,
            confidence: 0.95,
            seed: 0,
        }
    }

    pub fn stability() -> Self {
        MonitorConfig {
            threshold_pp: 1.0,
            ..Self::drift()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorBaseline {
    pub agent_id: String,
    pub config_digest: String,
    pub pinned_version: String,
    pub baseline_report: QualityReport<f64>,
    pub created_at: Timestamp,
}

impl MonitorBaseline {
    /// Scores the agent on `pinned` and records the result as its baseline.
    pub fn establish(
        agent_id: &str,
        config_digest: &str,
        decisions: &[AgentDecision],
        pinned: &GdsVersion,
        policy: &PolicyVersion,
        created_at: Timestamp,
    ) -> Result<Self> {
        let scored = metrics::confusion(decisions, pinned, policy)?;
        Ok(MonitorBaseline {
            agent_id: agent_id.to_string(),
            config_digest: config_digest.to_string(),
            pinned_version: pinned.version_id.clone(),
            baseline_report: quality_report(scored.counts)?,
            created_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Drift,
    Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertStatus {
    Pass,
    Alert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertReason {
    /// The primary delta exceeds the threshold and its interval excludes 0.
    ThresholdExceeded,
    InsufficientData,
    ConfigDigestMismatch,
    /// The primary metric is undefined on the baseline or the new sample.
    UndefinedMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertResult {
    pub track: Track,
    pub agent_id: String,
    pub primary_metric: MetricName,
    pub primary_delta_pp: Option<f64>,
    pub metric_deltas: Vec<MetricDelta<f64>>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub threshold_pp: f64,
    pub status: AlertStatus,
    pub reason: Option<AlertReason>,
    pub sample_size: usize,
}

/// An alert together with the exact item set that was scored.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub alert: AlertResult,
    pub scored_items: BTreeSet<String>,
}

/// `(decided positive, gold positive)` for each scored item.
type Pairs = Vec<(bool, bool)>;

fn tally<'a>(pairs: impl IntoIterator<Item = &'a (bool, bool)>) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(pred, gold) in pairs {
        match (pred, gold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for the primary-metric delta in pp.
fn bootstrap_ci(pairs: &Pairs, baseline: f64, config: &MonitorConfig, track: Track) -> Option<(f64, f64)> {
    if pairs.is_empty() || config.resamples == 0 {
        return None;
    }
    let stream = match track {
        Track::Drift => "bootstrap-drift",
        Track::Stability => "bootstrap-stability",
    };
    let mut rng = substream_rng(config.seed, stream);
    let n = pairs.len();
    let mut deltas = Vec::with_capacity(config.resamples);
    for _ in 0..config.resamples {
        let counts = tally((0..n).map(|_| &pairs[rng.random_range(0..n)]));
        let report: QualityReport<f64> = quality_report(counts).ok()?;
        if let Some(m) = report.get(config.primary_metric) {
            deltas.push((m - baseline) * 100.0);
        }
    }
    if deltas.is_empty() {
        return None;
    }
    deltas.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.confidence) / 2.0;
    Some((percentile(&deltas, alpha), percentile(&deltas, 1.0 - alpha)))
}

fn evaluate_track(
    track: Track,
    baseline: &MonitorBaseline,
    pairs: Pairs,
    digest_mismatch: bool,
    config: &MonitorConfig,
) -> AlertResult {
    let sample_size = pairs.len();
    let base = baseline.baseline_report.get(config.primary_metric);
    let current: Option<QualityReport<f64>> = quality_report(tally(&pairs)).ok();
    let metric_deltas = current
        .as_ref()
        .map(|r| {
            relative_report_between(&baseline.agent_id, &baseline.baseline_report, &baseline.agent_id, r)
                .deltas
        })
        .unwrap_or_default();
    let primary_delta_pp = current
        .as_ref()
        .and_then(|r| Some((r.get(config.primary_metric)? - base?) * 100.0));
    let ci = base.and_then(|b| bootstrap_ci(&pairs, b, config, track));
    let excludes_zero = ci.is_some_and(|(lo, hi)| lo > 0.0 || hi < 0.0);

    let reason = if sample_size < config.min_n {
        Some(AlertReason::InsufficientData)
    } else if digest_mismatch {
        Some(AlertReason::ConfigDigestMismatch)
    } else if let Some(delta) = primary_delta_pp {
        (delta.abs() > config.threshold_pp && excludes_zero).then_some(AlertReason::ThresholdExceeded)
    } else {
        Some(AlertReason::UndefinedMetric)
    };
    AlertResult {
        track,
        agent_id: baseline.agent_id.clone(),
        primary_metric: config.primary_metric,
        primary_delta_pp,
        metric_deltas,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
        threshold_pp: config.threshold_pp,
        status: if reason.is_some() {
            AlertStatus::Alert
        } else {
            AlertStatus::Pass
        },
        reason,
        sample_size,
    }
}

fn pairs_for(
    decisions: &[AgentDecision],
    truth: &GdsVersion,
    policy: &PolicyVersion,
    mut keep: impl FnMut(&str) -> bool,
) -> Result<(Pairs, BTreeSet<String>)> {
    if truth.policy != policy.reference() {
        return Err(MetricsError::PolicyMismatch {
            truth: truth.policy.clone(),
            given: policy.reference(),
        }
        .into());
    }
    if !policy.is_binary() {
        return Err(MetricsError::NonBinaryPolicy(policy.reference()).into());
    }
    let positive = policy.positive_label();
    let mut pairs = Vec::new();
    let mut scored = BTreeSet::new();
    for d in decisions {
        if !keep(&d.item_id) {
            continue;
        }
        let gold = truth
            .label_of(&d.item_id)
            .ok_or_else(|| MetricsError::UnknownItem(d.item_id.clone()))?;
        if !policy.has_label(&d.label) {
            return Err(MetricsError::UnknownLabel {
                item_id: d.item_id.clone(),
                label: d.label.clone(),
            }
            .into());
        }
        if !scored.insert(d.item_id.clone()) {
            return Err(MetricsError::DuplicateDecision(d.item_id.clone()).into());
        }
        pairs.push((d.label == positive, gold == positive));
    }
    Ok((pairs, scored))
}

/// Scores the agent on items that `child` added relative to `parent`.
/// Decisions on items the parent already held are ignored.
pub fn drift_check(
    decisions: &[AgentDecision],
    child: &GdsVersion,
    parent: &GdsVersion,
    versions: &impl VersionSource,
    baseline: &MonitorBaseline,
    policy: &PolicyVersion,
    config: &MonitorConfig,
) -> Result<CheckOutcome> {
    let fresh = new_items(child, parent, versions)?;
    let (pairs, scored_items) = pairs_for(decisions, child, policy, |id| fresh.contains(id))?;
    let alert = evaluate_track(Track::Drift, baseline, pairs, false, config);
    Ok(CheckOutcome {
        alert,
        scored_items,
    })
}

/// Re-scores the agent on its pinned baseline version.
pub fn stability_check(
    decisions: &[AgentDecision],
    pinned: &GdsVersion,
    baseline: &MonitorBaseline,
    config_digest: &str,
    policy: &PolicyVersion,
    config: &MonitorConfig,
) -> Result<CheckOutcome> {
    if pinned.version_id != baseline.pinned_version {
        return Err(MonitorError::PinnedMismatch {
            expected: baseline.pinned_version.clone(),
            got: pinned.version_id.clone(),
        });
    }
    if let Some(outside) = decisions.iter().find(|d| !pinned.contains(&d.item_id)) {
        return Err(MonitorError::OutsidePinned(outside.item_id.clone()));
    }
    let (pairs, scored_items) = pairs_for(decisions, pinned, policy, |_| true)?;
    let mismatch = config_digest != baseline.config_digest;
    let alert = evaluate_track(Track::Stability, baseline, pairs, mismatch, config);
    Ok(CheckOutcome {
        alert,
        scored_items,
    })
}

/// Appends one alert as a JSON line.
pub fn append_alert(log: &Path, alert: &AlertResult) -> Result<()> {
    let mut line = serde_json::to_vec(alert)?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(log)?;
    file.write_all(&line)?;
    Ok(())
}
