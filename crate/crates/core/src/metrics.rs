//! Decision-quality and dataset-quality metrics.
//!
//! Count-derived metrics are generic over [`Scalar`], so the same code runs in
//! `f64` for reports and in exact rationals for verification. A metric whose
//! denominator is zero is `None` (serialized as `null`), never a silent zero.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentDecision, ContentItem, PolicyRef, PolicyVersion, CODEBOOK_SIZE};
use crate::scalar::{ratio, RealScalar, Scalar};
use crate::store::GdsVersion;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("policy {0} is not binary")]
    NonBinaryPolicy(PolicyRef),
    #[error("no decision matches any gold item")]
    EmptyOverlap,
    #[error("decision for item `{item_id}` uses unknown label `{label}`")]
    UnknownLabel { item_id: String, label: String },
    #[error("decision for item `{0}` which is not in the golden set")]
    UnknownItem(String),
    #[error("more than one decision for item `{0}`")]
    DuplicateDecision(String),
    #[error("golden set is under policy {truth}, evaluation requested for {given}")]
    PolicyMismatch { truth: PolicyRef, given: PolicyRef },
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("distribution is not normalized (mass {0})")]
    NotNormalized(f64),
    #[error("distributions have different supports ({0} vs {1} bins)")]
    DimensionMismatch(usize, usize),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::NonBinaryPolicy(_) => "non_binary_policy",
            MetricsError::EmptyOverlap => "empty_overlap",
            MetricsError::UnknownLabel { .. } => "unknown_label",
            MetricsError::UnknownItem(_) => "unknown_item",
            MetricsError::DuplicateDecision(_) => "duplicate_decision",
            MetricsError::PolicyMismatch { .. } => "policy_mismatch",
            MetricsError::LengthMismatch(..) => "length_mismatch",
            MetricsError::EmptyInput => "empty_input",
            MetricsError::NotNormalized(_) => "not_normalized",
            MetricsError::DimensionMismatch(..) => "dimension_mismatch",
            MetricsError::UnknownMetric(_) => "unknown_metric",
        }
    }
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts plus the number of gold items no decision covered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredConfusion {
    pub counts: ConfusionCounts,
    pub uncovered: usize,
}

/// Tallies binary decisions against gold labels. Gold items without a
/// decision are excluded from the counts and reported as `uncovered`.
pub fn confusion(
    decisions: &[AgentDecision],
    truth: &GdsVersion,
    policy: &PolicyVersion,
) -> Result<ScoredConfusion> {
    if truth.policy != policy.reference() {
        return Err(MetricsError::PolicyMismatch {
            truth: truth.policy.clone(),
            given: policy.reference(),
        });
    }
    if !policy.is_binary() {
        return Err(MetricsError::NonBinaryPolicy(policy.reference()));
    }
    let positive = policy.positive_label();
    let mut seen = HashSet::with_capacity(decisions.len());
    let mut counts = ConfusionCounts::default();
    for d in decisions {
        let gold = truth
            .label_of(&d.item_id)
            .ok_or_else(|| MetricsError::UnknownItem(d.item_id.clone()))?;
        if !policy.has_label(&d.label) {
            return Err(MetricsError::UnknownLabel {
                item_id: d.item_id.clone(),
                label: d.label.clone(),
            });
        }
        if !seen.insert(d.item_id.as_str()) {
            return Err(MetricsError::DuplicateDecision(d.item_id.clone()));
        }
        match (d.label == positive, gold == positive) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fn_ += 1,
        }
    }
    if counts.total() == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    Ok(ScoredConfusion {
        counts,
        uncovered: truth.item_count - seen.len(),
    })
}

/// The twelve reported metrics, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
    NegPrecision,
    NegRecall,
    Fpr,
    Fnr,
    Informedness,
    Markedness,
    PredictedPositiveFraction,
    PositivePrevalence,
}

impl MetricName {
    pub const ALL: [MetricName; 12] = [
        MetricName::Accuracy,
        MetricName::Precision,
        MetricName::Recall,
        MetricName::F1,
        MetricName::NegPrecision,
        MetricName::NegRecall,
        MetricName::Fpr,
        MetricName::Fnr,
        MetricName::Informedness,
        MetricName::Markedness,
        MetricName::PredictedPositiveFraction,
        MetricName::PositivePrevalence,
    ];

    /// Lower is better for error rates.
    pub fn is_error_metric(self) -> bool {
        matches!(self, MetricName::Fpr | MetricName::Fnr)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::NegPrecision => "neg_precision",
            MetricName::NegRecall => "neg_recall",
            MetricName::Fpr => "fpr",
            MetricName::Fnr => "fnr",
            MetricName::Informedness => "informedness",
            MetricName::Markedness => "markedness",
            MetricName::PredictedPositiveFraction => "predicted_positive_fraction",
            MetricName::PositivePrevalence => "positive_prevalence",
        }
    }

    /// Column header used in table exports.
    pub fn column(self) -> &'static str {
        match self {
            MetricName::Accuracy => "Acc.",
            MetricName::Precision => "Prec.",
            MetricName::Recall => "Recall",
            MetricName::F1 => "F1",
            MetricName::NegPrecision => "Neg. Prec.",
            MetricName::NegRecall => "Neg. Rec.",
            MetricName::Fpr => "FPR",
            MetricName::Fnr => "FNR",
            MetricName::Informedness => "Inform.",
            MetricName::Markedness => "Marked.",
            MetricName::PredictedPositiveFraction => "Pred. Pos. Frac.",
            MetricName::PositivePrevalence => "Pos. Prev.",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.column() == s)
            .ok_or_else(|| MetricsError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport<T> {
    pub accuracy: T,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
    pub neg_precision: Option<T>,
    pub neg_recall: Option<T>,
    pub fpr: Option<T>,
    pub fnr: Option<T>,
    pub informedness: Option<T>,
    pub markedness: Option<T>,
    pub predicted_positive_fraction: T,
    pub positive_prevalence: T,
    pub counts: ConfusionCounts,
}

impl<T: Scalar> QualityReport<T> {
    pub fn get(&self, metric: MetricName) -> Option<T> {
        match metric {
            MetricName::Accuracy => Some(self.accuracy.clone()),
            MetricName::Precision => self.precision.clone(),
            MetricName::Recall => self.recall.clone(),
            MetricName::F1 => self.f1.clone(),
            MetricName::NegPrecision => self.neg_precision.clone(),
            MetricName::NegRecall => self.neg_recall.clone(),
            MetricName::Fpr => self.fpr.clone(),
            MetricName::Fnr => self.fnr.clone(),
            MetricName::Informedness => self.informedness.clone(),
            MetricName::Markedness => self.markedness.clone(),
            MetricName::PredictedPositiveFraction => Some(self.predicted_positive_fraction.clone()),
            MetricName::PositivePrevalence => Some(self.positive_prevalence.clone()),
        }
    }
}

fn sum_minus_one<T: Scalar>(a: &Option<T>, b: &Option<T>) -> Option<T> {
    Some(a.clone()? + b.clone()? - T::one())
}

/// Evaluates the full metric suite for one confusion matrix.
pub fn quality_report<T: Scalar>(counts: ConfusionCounts) -> Result<QualityReport<T>> {
    let ConfusionCounts { tp, fp, tn, fn_ } = counts;
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let precision = ratio::<T>(tp, tp + fp);
    let recall = ratio::<T>(tp, tp + fn_);
    let neg_precision = ratio::<T>(tn, tn + fn_);
    let neg_recall = ratio::<T>(tn, tn + fp);
    let f1 = match (&precision, &recall) {
        (Some(p), Some(r)) if !(p.clone() + r.clone()).is_zero() => {
            let two = T::from_count(2);
            Some(two * p.clone() * r.clone() / (p.clone() + r.clone()))
        }
        _ => None,
    };
    Ok(QualityReport {
        accuracy: T::from_count(tp + tn) / T::from_count(total),
        informedness: sum_minus_one(&recall, &neg_recall),
        markedness: sum_minus_one(&precision, &neg_precision),
        precision,
        recall,
        f1,
        neg_precision,
        neg_recall,
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        predicted_positive_fraction: T::from_count(tp + fp) / T::from_count(total),
        positive_prevalence: T::from_count(tp + fn_) / T::from_count(total),
        counts,
    })
}

/// Convenience: confusion followed by the `f64` report.
pub fn evaluate(
    decisions: &[AgentDecision],
    truth: &GdsVersion,
    policy: &PolicyVersion,
) -> Result<(QualityReport<f64>, usize)> {
    let scored = confusion(decisions, truth, policy)?;
    Ok((quality_report(scored.counts)?, scored.uncovered))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult<T> {
    pub p_o: T,
    pub p_e: T,
    /// `None` when both raters are constant and disagree.
    pub kappa: Option<T>,
    /// Both raters used a single class each; chance agreement is 0 or 1.
    pub degenerate: bool,
}

/// Two-rater Cohen's kappa, with chance agreement from the product of
/// per-rater marginals summed over classes.
pub fn cohens_kappa<L, T>(labels_a: &[L], labels_b: &[L]) -> Result<KappaResult<T>>
where
    L: Eq + Hash,
    T: Scalar,
{
    if labels_a.len() != labels_b.len() {
        return Err(MetricsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = labels_a.len() as u64;
    let mut agree = 0u64;
    let mut marg_a: HashMap<&L, u64> = HashMap::new();
    let mut marg_b: HashMap<&L, u64> = HashMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        if a == b {
            agree += 1;
        }
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
    }
    let chance: u64 = marg_a
        .iter()
        .map(|(label, ca)| ca * marg_b.get(label).copied().unwrap_or(0))
        .sum();
    let p_o = T::from_count(agree) / T::from_count(n);
    let p_e = T::from_count(chance) / (T::from_count(n) * T::from_count(n));
    let degenerate = marg_a.len() == 1 && marg_b.len() == 1;
    let kappa = if degenerate {
        // p_e is 1 when the two constants agree; kappa is then 1 by convention.
        (agree == n).then(T::one)
    } else {
        Some((p_o.clone() - p_e.clone()) / (T::one() - p_e.clone()))
    };
    Ok(KappaResult {
        p_o,
        p_e,
        kappa,
        degenerate,
    })
}

/// Kappa between two decision sets, aligned on the items both cover.
pub fn decision_kappa(a: &[AgentDecision], b: &[AgentDecision]) -> Result<KappaResult<f64>> {
    let b_by_item: HashMap<&str, &str> = b
        .iter()
        .map(|d| (d.item_id.as_str(), d.label.as_str()))
        .collect();
    let (la, lb): (Vec<&str>, Vec<&str>) = a
        .iter()
        .filter_map(|d| b_by_item.get(d.item_id.as_str()).map(|l| (d.label.as_str(), *l)))
        .unzip();
    if la.is_empty() {
        return Err(MetricsError::EmptyOverlap);
    }
    cohens_kappa(&la, &lb)
}

/// A normalized distribution over discrete bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeDistribution<T> {
    pub probs: Vec<T>,
    pub support_count: usize,
}

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl<T: RealScalar> CodeDistribution<T> {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let total = T::from_count(total);
        Ok(CodeDistribution {
            probs: counts.iter().map(|&c| T::from_count(c) / total).collect(),
            support_count: counts.iter().filter(|&&c| c > 0).count(),
        })
    }

    pub fn from_probs(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mass = probs.iter().fold(T::zero(), |acc, p| acc + *p);
        let bad_entry = probs.iter().any(|p| !p.is_finite() || *p < T::zero());
        if bad_entry || (mass.as_f64() - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(MetricsError::NotNormalized(mass.as_f64()));
        }
        let support_count = probs.iter().filter(|p| !p.is_zero()).count();
        Ok(CodeDistribution {
            probs,
            support_count,
        })
    }

    /// Histogram of semantic codes over the full codebook.
    pub fn of_items<'a>(items: impl IntoIterator<Item = &'a ContentItem>) -> Result<Self> {
        Self::from_counts(&code_histogram(items))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult<T> {
    pub jsd: T,
    pub kl_p_m: T,
    pub kl_q_m: T,
}

/// `sum p log2(p/m)` divided by the mass of `p`. Dividing by the
/// accumulated mass keeps disjoint supports at exactly one bit even when the
/// input sums to `1 ± ulp`.
fn kl_to_mixture<T: RealScalar>(p: &[T], m: &[T]) -> T {
    let mut acc = T::zero();
    let mut mass = T::zero();
    for (&pi, &mi) in p.iter().zip(m) {
        if pi > T::zero() {
            acc = acc + pi * (pi / mi).log2();
            mass = mass + pi;
        }
    }
    acc / mass
}

/// Base-2 Jensen–Shannon divergence, bounded in `[0, 1]`.
pub fn jsd<T: RealScalar>(
    p: &CodeDistribution<T>,
    q: &CodeDistribution<T>,
) -> Result<DivergenceResult<T>> {
    if p.probs.len() != q.probs.len() {
        return Err(MetricsError::DimensionMismatch(p.probs.len(), q.probs.len()));
    }
    for d in [p, q] {
        let mass = d.probs.iter().fold(T::zero(), |acc, x| acc + *x);
        if (mass.as_f64() - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(MetricsError::NotNormalized(mass.as_f64()));
        }
    }
    let half = T::one() / T::from_count(2);
    let m: Vec<T> = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| (a + b) * half)
        .collect();
    let kl_p_m = kl_to_mixture(&p.probs, &m).max(T::zero());
    let kl_q_m = kl_to_mixture(&q.probs, &m).max(T::zero());
    let jsd = (half * kl_p_m + half * kl_q_m).max(T::zero()).min(T::one());
    Ok(DivergenceResult {
        jsd,
        kl_p_m,
        kl_q_m,
    })
}

pub fn code_histogram<'a>(items: impl IntoIterator<Item = &'a ContentItem>) -> Vec<u64> {
    let mut counts = vec![0u64; CODEBOOK_SIZE];
    for item in items {
        if item.code.check().is_ok() {
            counts[item.code.index()] += 1;
        }
    }
    counts
}

/// Fraction of the codebook observed among `codes`.
pub fn coverage<T: Scalar>(codes: impl IntoIterator<Item = usize>) -> T {
    let distinct: BTreeSet<usize> = codes.into_iter().filter(|&c| c < CODEBOOK_SIZE).collect();
    T::from_count(distinct.len() as u64) / T::from_count(CODEBOOK_SIZE as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub coverage: f64,
    pub item_count: usize,
    /// Absent for an empty dataset.
    pub distribution: Option<CodeDistribution<f64>>,
    pub divergence_vs_production: Option<DivergenceResult<f64>>,
}

/// Coverage and code distribution of a dataset.
pub fn semantic_coverage<'a>(items: impl IntoIterator<Item = &'a ContentItem>) -> DatasetProfile {
    let counts = code_histogram(items);
    let item_count = counts.iter().sum::<u64>() as usize;
    DatasetProfile {
        coverage: coverage(counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(i, _)| i)),
        item_count,
        distribution: CodeDistribution::from_counts(&counts).ok(),
        divergence_vs_production: None,
    }
}

/// Profile including divergence from a production sample.
pub fn profile_against<'a>(
    items: impl IntoIterator<Item = &'a ContentItem>,
    production: impl IntoIterator<Item = &'a ContentItem>,
) -> Result<DatasetProfile> {
    let mut profile = semantic_coverage(items);
    let prod = CodeDistribution::<f64>::of_items(production)?;
    let dataset = profile.distribution.as_ref().ok_or(MetricsError::EmptyInput)?;
    profile.divergence_vs_production = Some(jsd(dataset, &prod)?);
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta<T> {
    pub metric: MetricName,
    /// Percentage points, subject minus baseline.
    pub delta_pp: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeReport<T> {
    pub baseline_agent_id: String,
    pub subject_agent_id: String,
    pub deltas: Vec<MetricDelta<T>>,
}

impl<T: Scalar> RelativeReport<T> {
    pub fn delta(&self, metric: MetricName) -> Option<T> {
        self.deltas
            .iter()
            .find(|d| d.metric == metric)
            .and_then(|d| d.delta_pp.clone())
    }
}

/// Per-metric differences in percentage points. Undefined on either side
/// propagates as undefined.
pub fn relative_report<T: Scalar>(
    baseline: &QualityReport<T>,
    subject: &QualityReport<T>,
) -> RelativeReport<T> {
    relative_report_between("baseline", baseline, "subject", subject)
}

pub fn relative_report_between<T: Scalar>(
    baseline_agent_id: &str,
    baseline: &QualityReport<T>,
    subject_agent_id: &str,
    subject: &QualityReport<T>,
) -> RelativeReport<T> {
    let deltas = MetricName::ALL
        .into_iter()
        .map(|metric| MetricDelta {
            metric,
            delta_pp: match (baseline.get(metric), subject.get(metric)) {
                (Some(b), Some(s)) => Some((s - b) * T::hundred()),
                _ => None,
            },
        })
        .collect();
    RelativeReport {
        baseline_agent_id: baseline_agent_id.to_string(),
        subject_agent_id: subject_agent_id.to_string(),
        deltas,
    }
}

/// Whether a relative report clears a quality bar on one metric. Error
/// metrics must drop by at least the threshold; all others must rise by it.
/// An undefined delta never passes.
pub fn exit_criterion<T: Scalar>(
    report: &RelativeReport<T>,
    metric: &str,
    threshold_pp: T,
) -> Result<bool> {
    let metric: MetricName = metric.parse()?;
    let Some(delta) = report.delta(metric) else {
        return Ok(false);
    };
    Ok(if metric.is_error_metric() {
        delta <= T::zero() - threshold_pp
    } else {
        delta >= threshold_pp
    })
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_else(|| "undefined".into())
}

/// CSV table of absolute reports, one row per agent, columns in report order.
pub fn write_reports_csv<W: Write>(
    out: W,
    rows: &[(&str, &QualityReport<f64>)],
) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["Labeler"];
    header.extend(MetricName::ALL.iter().map(|m| m.column()));
    writer.write_record(&header)?;
    for (agent, report) in rows {
        let mut record = vec![agent.to_string()];
        record.extend(MetricName::ALL.iter().map(|m| cell(report.get(*m))));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// CSV table of relative reports with signed percentage-point cells.
pub fn write_relative_csv<W: Write>(out: W, rows: &[&RelativeReport<f64>]) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["Labeler"];
    header.extend(MetricName::ALL.iter().map(|m| m.column()));
    writer.write_record(&header)?;
    for report in rows {
        let mut record = vec![report.subject_agent_id.clone()];
        record.extend(MetricName::ALL.iter().map(|m| match report.delta(*m) {
            Some(v) => format!("{v:+.1}"),
            None => "undefined".into(),
        }));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
