//! Propensity-driven active sampling.
//!
//! A binary classifier estimates `p(item in GDS | embedding)` over the
//! content pool; the next labeling batch favours candidates with low scores,
//! i.e. content unlike anything the golden set already holds.

use rand::prelude::*;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::coverage;
use crate::simlab::substream_rng;
use crate::store::{ContentPool, GdsVersion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("propensity training needs items both inside and outside the golden set")]
    SingleClass,
    #[error("no candidates outside the golden set")]
    EmptyCandidates,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("embedding has {got} features, model expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("malformed model: {0}")]
    BadModel(String),
}

impl SamplerError {
    pub fn code(&self) -> &'static str {
        match self {
            SamplerError::SingleClass => "single_class",
            SamplerError::EmptyCandidates => "empty_candidates",
            SamplerError::ZeroBatch => "zero_batch",
            SamplerError::FeatureDim { .. } => "feature_dim",
            SamplerError::BadModel(_) => "bad_model",
        }
    }
}

pub type Result<T, E = SamplerError> = std::result::Result<T, E>;

pub const MIN_PROPENSITY: f64 = 1e-6;
/// Added to propensities before inverting them into sampling weights.
pub const WEIGHT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Logistic,
    BoostedStumps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropensityConfig {
    pub kind: ModelKind,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    /// Histogram bins per feature for boosted stumps.
    pub bins: usize,
    /// Weight the log loss so both classes carry equal total weight, then
    /// shift the intercept back to the observed base rate.
    pub balance_classes: bool,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            kind: ModelKind::Logistic,
            iterations: 500,
            learning_rate: 0.1,
            l2: 1e-3,
            seed: 0,
            bins: 32,
            balance_classes: true,
        }
    }
}

impl PropensityConfig {
    pub fn boosted_stumps() -> Self {
        PropensityConfig {
            kind: ModelKind::BoostedStumps,
            iterations: 100,
            learning_rate: 0.3,
            l2: 1.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub train_auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

/// Calibrated membership classifier.
///
/// Parameter layout: logistic models store `[w_0 .. w_{d-1}, bias]`; boosted
/// stumps store `[base_score, (feature, threshold, left, right) ...]` where an
/// input goes left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub parameters: Vec<f64>,
    pub training_meta: TrainingMeta,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dot product over four independent lanes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

impl PropensityModel {
    fn logit(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Logistic => {
                let (w, bias) = self.parameters.split_at(self.feature_dim);
                bias[0] + dot(w, x)
            }
            ModelKind::BoostedStumps => {
                let mut z = self.parameters[0];
                for stump in self.parameters[1..].chunks_exact(4) {
                    let feature = stump[0] as usize;
                    z += if x[feature] <= stump[1] { stump[2] } else { stump[3] };
                }
                z
            }
        }
    }

    /// Membership probability, clamped to `[1e-6, 1 - 1e-6]`.
    pub fn predict(&self, embedding: &[f64]) -> Result<f64> {
        if embedding.len() != self.feature_dim {
            return Err(SamplerError::FeatureDim {
                expected: self.feature_dim,
                got: embedding.len(),
            });
        }
        Ok(sigmoid(self.logit(embedding)).clamp(MIN_PROPENSITY, 1.0 - MIN_PROPENSITY))
    }

    pub fn check(&self) -> Result<()> {
        let ok = match self.kind {
            ModelKind::Logistic => self.parameters.len() == self.feature_dim + 1,
            ModelKind::BoostedStumps => {
                !self.parameters.is_empty()
                    && (self.parameters.len() - 1).is_multiple_of(4)
                    && self.parameters[1..]
                        .chunks_exact(4)
                        .all(|s| s[0] >= 0.0 && (s[0] as usize) < self.feature_dim)
            }
        };
        if ok && self.parameters.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(SamplerError::BadModel(format!(
                "{:?} model with {} parameters for dim {}",
                self.kind,
                self.parameters.len(),
                self.feature_dim
            )))
        }
    }
}

/// Pool embeddings laid out row-major in item_id order.
pub struct Design<'a> {
    pub ids: Vec<&'a str>,
    pub x: Vec<f64>,
    pub dim: usize,
}

impl<'a> Design<'a> {
    pub fn from_pool(pool: &'a ContentPool) -> Self {
        let dim = pool.dim();
        let mut ids = Vec::with_capacity(pool.len());
        let mut x = Vec::with_capacity(pool.len() * dim);
        for item in pool.items() {
            ids.push(item.item_id.as_str());
            x.extend_from_slice(item.embedding.as_slice());
        }
        Design { ids, x, dim }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn membership(&self, gds: &GdsVersion) -> Vec<bool> {
        self.ids.iter().map(|id| gds.contains(id)).collect()
    }
}

const CHUNK: usize = 512;

/// Full-batch gradient descent on L2-regularized log loss. Partial sums are
/// reduced in a fixed chunk order so results do not depend on thread timing.
///
/// With class balancing the positive and negative rows carry equal total
/// weight during training and the intercept is corrected by the log prior
/// odds afterwards, which restores calibrated membership probabilities.
fn prior_logit(base_rate: f64) -> f64 {
    (base_rate / (1.0 - base_rate)).ln()
}

/// `start` is a parameter vector before the prior correction, for warm starts.
fn train_logistic(
    design: &Design,
    y: &[bool],
    cfg: &PropensityConfig,
    base_rate: f64,
    start: Option<Vec<f64>>,
) -> Vec<f64> {
    let dim = design.dim;
    let n = design.len() as f64;
    let (w_pos, w_neg) = if cfg.balance_classes {
        (0.5 / base_rate, 0.5 / (1.0 - base_rate))
    } else {
        (1.0, 1.0)
    };
    let prior_logit = prior_logit(base_rate);
    let mut params = start.unwrap_or_else(|| {
        let mut p = vec![0.0; dim + 1];
        if !cfg.balance_classes {
            p[dim] = prior_logit;
        }
        p
    });
    for _ in 0..cfg.iterations {
        let (w, bias) = (&params[..dim], params[dim]);
        let partials: Vec<Vec<f64>> = design
            .x
            .par_chunks(CHUNK * dim)
            .zip(y.par_chunks(CHUNK))
            .map(|(xs, ys)| {
                let mut g = vec![0.0; dim + 1];
                for (x, &yi) in xs.chunks_exact(dim).zip(ys) {
                    let z = bias + dot(w, x);
                    let (weight, target) = if yi { (w_pos, 1.0) } else { (w_neg, 0.0) };
                    let err = weight * (sigmoid(z) - target);
                    for (gj, xj) in g[..dim].iter_mut().zip(x) {
                        *gj += err * xj;
                    }
                    g[dim] += err;
                }
                g
            })
            .collect();
        let mut grad = vec![0.0; dim + 1];
        for g in partials {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        for j in 0..=dim {
            let reg = if j < dim { cfg.l2 * params[j] } else { 0.0 };
            params[j] -= cfg.learning_rate * (grad[j] / n + reg);
        }
    }
    if cfg.balance_classes {
        params[dim] += prior_logit;
    }
    params
}

/// Gradient-boosted depth-one trees on histogram bins (Newton leaf values).
fn train_stumps(design: &Design, y: &[bool], cfg: &PropensityConfig, base_rate: f64) -> Vec<f64> {
    let dim = design.dim;
    let n = design.len();
    let bins = cfg.bins.clamp(2, 255);
    // Bin edges per feature from sorted values.
    let edges: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| design.row(i)[j]).collect();
            col.sort_by(f64::total_cmp);
            let mut e: Vec<f64> = (1..bins).map(|b| col[b * (n - 1) / bins]).collect();
            e.dedup();
            e
        })
        .collect();
    let binned: Vec<Vec<u8>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| edges[j].partition_point(|&e| e < design.row(i)[j]) as u8)
                .collect()
        })
        .collect();

    let base = (base_rate / (1.0 - base_rate)).ln();
    let mut params = vec![base];
    let mut z = vec![base; n];
    for _ in 0..cfg.iterations {
        let gh: Vec<(f64, f64)> = z
            .iter()
            .zip(y)
            .map(|(zi, yi)| {
                let p = sigmoid(*zi);
                (if *yi { 1.0 } else { 0.0 } - p, (p * (1.0 - p)).max(1e-12))
            })
            .collect();
        let (g_tot, h_tot) = gh.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let best = (0..dim)
            .into_par_iter()
            .map(|j| {
                let nb = edges[j].len() + 1;
                let mut hist = vec![(0.0, 0.0); nb];
                for (i, b) in binned[j].iter().enumerate() {
                    hist[*b as usize].0 += gh[i].0;
                    hist[*b as usize].1 += gh[i].1;
                }
                let mut best: Option<(f64, usize)> = None;
                let (mut gl, mut hl) = (0.0, 0.0);
                for (b, (g, h)) in hist.iter().enumerate().take(nb - 1) {
                    gl += g;
                    hl += h;
                    let (gr, hr) = (g_tot - gl, h_tot - hl);
                    let gain = gl * gl / (hl + cfg.l2) + gr * gr / (hr + cfg.l2);
                    if best.is_none_or(|(bg, _)| gain > bg) {
                        best = Some((gain, b));
                    }
                }
                best.map(|(gain, b)| (gain, j, b))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .fold(None::<(f64, usize, usize)>, |acc, cand| match acc {
                Some(a) if a.0 >= cand.0 => Some(a),
                _ => Some(cand),
            });
        let Some((_, feature, bin)) = best else { break };
        let (mut gl, mut hl) = (0.0, 0.0);
        for (i, b) in binned[feature].iter().enumerate() {
            if (*b as usize) <= bin {
                gl += gh[i].0;
                hl += gh[i].1;
            }
        }
        let left = cfg.learning_rate * gl / (hl + cfg.l2);
        let right = cfg.learning_rate * (g_tot - gl) / (h_tot - hl + cfg.l2);
        let threshold = edges[feature][bin];
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += if (binned[feature][i] as usize) <= bin { left } else { right };
        }
        params.extend([feature as f64, threshold, left, right]);
    }
    params
}

/// Area under the ROC curve via the rank-sum statistic with tied ranks
/// averaged. `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let neg = labels.len() as f64 - pos;
    (pos > 0.0 && neg > 0.0).then(|| (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Trains on explicit membership flags aligned with `design`.
pub fn train_on(design: &Design, y: &[bool], config: &PropensityConfig) -> Result<PropensityModel> {
    fit(design, y, config, None)
}

/// Like [`train_on`], but a logistic model starts from `previous` instead of
/// zero. Boosted stumps always train from scratch.
pub fn train_warm(
    design: &Design,
    y: &[bool],
    config: &PropensityConfig,
    previous: &PropensityModel,
) -> Result<PropensityModel> {
    let usable = config.kind == ModelKind::Logistic
        && previous.kind == ModelKind::Logistic
        && previous.feature_dim == design.dim;
    if !usable {
        return train_on(design, y, config);
    }
    let mut start = previous.parameters.clone();
    if config.balance_classes {
        let meta = &previous.training_meta;
        let rate = meta.positives as f64 / (meta.positives + meta.negatives) as f64;
        start[design.dim] -= prior_logit(rate);
    }
    fit(design, y, config, Some(start))
}

fn fit(design: &Design, y: &[bool], config: &PropensityConfig, start: Option<Vec<f64>>) -> Result<PropensityModel> {
    let positives = y.iter().filter(|v| **v).count();
    let negatives = y.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SamplerError::SingleClass);
    }
    let base_rate = positives as f64 / y.len() as f64;
    let parameters = match config.kind {
        ModelKind::Logistic => train_logistic(design, y, config, base_rate, start),
        ModelKind::BoostedStumps => train_stumps(design, y, config, base_rate),
    };
    let mut model = PropensityModel {
        kind: config.kind,
        feature_dim: design.dim,
        parameters,
        training_meta: TrainingMeta {
            iterations: config.iterations,
            learning_rate: config.learning_rate,
            l2: config.l2,
            seed: config.seed,
            train_auc: None,
            positives,
            negatives,
        },
    };
    let scores = score_rows(&model, design);
    model.training_meta.train_auc = auc(&scores, y);
    Ok(model)
}

fn score_rows(model: &PropensityModel, design: &Design) -> Vec<f64> {
    (0..design.len())
        .into_par_iter()
        .map(|i| sigmoid(model.logit(design.row(i))).clamp(MIN_PROPENSITY, 1.0 - MIN_PROPENSITY))
        .collect()
}

/// Fits `p(item in gds | embedding)` over the pool.
pub fn train_propensity(
    pool: &ContentPool,
    gds: &GdsVersion,
    config: &PropensityConfig,
) -> Result<PropensityModel> {
    let design = Design::from_pool(pool);
    let y = design.membership(gds);
    train_on(&design, &y, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Weighted,
    BottomK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBatch {
    /// Selection order: first element was selected first.
    pub selected: Vec<String>,
    pub mode: SamplingMode,
    pub seed: u64,
    pub weights_digest: String,
}

fn weights_digest(weights: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for w in weights {
        hasher.update(w.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Picks `k` of the scored candidates. `candidates` must be in ascending id
/// order; returned positions index into it.
pub fn select_scored(
    candidates: &[(&str, f64)],
    k: usize,
    mode: SamplingMode,
    seed: u64,
) -> (Vec<usize>, String) {
    let weights: Vec<f64> = candidates
        .iter()
        .map(|(_, p)| 1.0 / (p + WEIGHT_EPSILON))
        .collect();
    let digest = weights_digest(&weights);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    match mode {
        SamplingMode::BottomK => {
            order.sort_by(|&a, &b| {
                candidates[a]
                    .1
                    .total_cmp(&candidates[b].1)
                    .then_with(|| candidates[a].0.cmp(candidates[b].0))
            });
        }
        SamplingMode::Weighted => {
            // Exponential keys: key = ln(u) / w, largest keys win.
            let mut rng = substream_rng(seed, "weighted-selection");
            let keys: Vec<f64> = weights
                .iter()
                .map(|w| (1.0 - rng.random::<f64>()).ln() / w)
                .collect();
            order.sort_by(|&a, &b| {
                keys[b]
                    .total_cmp(&keys[a])
                    .then_with(|| candidates[a].0.cmp(candidates[b].0))
            });
        }
    }
    order.truncate(k);
    (order, digest)
}

/// Chooses the next labeling batch among pool items not yet in `gds`.
pub fn select_batch(
    pool: &ContentPool,
    gds: &GdsVersion,
    model: &PropensityModel,
    k: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<SamplingBatch> {
    if k == 0 {
        return Err(SamplerError::ZeroBatch);
    }
    let mut candidates = Vec::new();
    for item in pool.items().filter(|i| !gds.contains(&i.item_id)) {
        candidates.push((item.item_id.as_str(), model.predict(item.embedding.as_slice())?));
    }
    if candidates.is_empty() {
        return Err(SamplerError::EmptyCandidates);
    }
    let (picked, weights_digest) = select_scored(&candidates, k, mode, seed);
    Ok(SamplingBatch {
        selected: picked.into_iter().map(|i| candidates[i].0.to_string()).collect(),
        mode,
        seed,
        weights_digest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Propensity,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Labels acquired per round.
    pub budget: usize,
    pub rounds: usize,
    pub mode: SamplingMode,
    /// Retrain the propensity model every this many rounds.
    pub retrain_every: usize,
    pub propensity: PropensityConfig,
    /// Iterations for retrains after the first, which start from the
    /// previous model. `None` trains every model from scratch.
    pub warm_iterations: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            budget: 50,
            rounds: 10,
            mode: SamplingMode::Weighted,
            retrain_every: 1,
            propensity: PropensityConfig::default(),
            warm_iterations: Some(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrace {
    pub strategy: Strategy,
    pub seed: u64,
    /// Coverage before the first round, then after each round.
    pub coverage: Vec<f64>,
}

fn member_coverage(pool: &ContentPool, design: &Design, member: &[bool]) -> f64 {
    coverage(
        design
            .ids
            .iter()
            .zip(member)
            .filter(|(_, m)| **m)
            .filter_map(|(id, _)| pool.get(id).map(|item| item.code.index())),
    )
}

/// Simulated label-then-retrain loop: each round acquires `budget` new items
/// by the given strategy and records the golden set's coverage.
pub fn coverage_gain_experiment(
    pool: &ContentPool,
    initial_gds: &GdsVersion,
    strategy: Strategy,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<CoverageTrace> {
    let design = Design::from_pool(pool);
    let mut member = design.membership(initial_gds);
    let mut trace = vec![member_coverage(pool, &design, &member)];
    let mut model: Option<PropensityModel> = None;
    let mut rng = substream_rng(seed, "uniform-selection");
    for round in 0..config.rounds {
        if config.budget > 0 {
            let candidates: Vec<usize> = (0..design.len()).filter(|&i| !member[i]).collect();
            if candidates.is_empty() {
                trace.push(*trace.last().expect("trace starts non-empty"));
                continue;
            }
            let k = config.budget.min(candidates.len());
            let picked: Vec<usize> = match strategy {
                Strategy::Uniform => index::sample(&mut rng, candidates.len(), k)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect(),
                Strategy::Propensity => {
                    if model.is_none() || round % config.retrain_every.max(1) == 0 {
                        let cfg = PropensityConfig {
                            seed,
                            ..config.propensity.clone()
                        };
                        model = Some(match (&model, config.warm_iterations) {
                            (Some(previous), Some(iterations)) => train_warm(
                                &design,
                                &member,
                                &PropensityConfig { iterations, ..cfg },
                                previous,
                            )?,
                            _ => train_on(&design, &member, &cfg)?,
                        });
                    }
                    let m = model.as_ref().expect("model trained above");
                    let scored: Vec<(&str, f64)> = candidates
                        .par_iter()
                        .map(|&i| {
                            let p = sigmoid(m.logit(design.row(i)))
                                .clamp(MIN_PROPENSITY, 1.0 - MIN_PROPENSITY);
                            (design.ids[i], p)
                        })
                        .collect();
                    let round_seed = seed.wrapping_mul(1_000_003).wrapping_add(round as u64);
                    select_scored(&scored, k, config.mode, round_seed)
                        .0
                        .into_iter()
                        .map(|i| candidates[i])
                        .collect()
                }
            };
            for i in picked {
                member[i] = true;
            }
        }
        trace.push(member_coverage(pool, &design, &member));
    }
    Ok(CoverageTrace {
        strategy,
        seed,
        coverage: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_k_is_argmin() {
        let c = [("a", 0.9), ("b", 0.1), ("c", 0.5)];
        let (picked, _) = select_scored(&c, 1, SamplingMode::BottomK, 0);
        assert_eq!(picked, vec![1]);
        let (picked, _) = select_scored(&c, 3, SamplingMode::BottomK, 0);
        assert_eq!(picked, vec![1, 2, 0]);
    }

    #[test]
    fn bottom_k_ties_by_id() {
        let c = [("a", 0.5), ("b", 0.1), ("c", 0.1)];
        let (picked, _) = select_scored(&c, 2, SamplingMode::BottomK, 0);
        assert_eq!(picked, vec![1, 2]);
    }

    #[test]
    fn k_at_least_candidates_returns_all() {
        let c = [("a", 0.9), ("b", 0.1), ("c", 0.5)];
        let (mut picked, _) = select_scored(&c, 10, SamplingMode::Weighted, 4);
        picked.sort();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn weighted_is_deterministic() {
        let c: Vec<(String, f64)> = (0..50).map(|i| (format!("i{i:02}"), (i as f64) / 60.0)).collect();
        let c: Vec<(&str, f64)> = c.iter().map(|(a, b)| (a.as_str(), *b)).collect();
        assert_eq!(
            select_scored(&c, 5, SamplingMode::Weighted, 9),
            select_scored(&c, 5, SamplingMode::Weighted, 9)
        );
    }

    #[test]
    fn auc_known_values() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]), Some(0.0));
        assert_eq!(auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auc(&[0.5], &[true]), None);
    }

    #[test]
    fn predict_rejects_wrong_dim() {
        let m = PropensityModel {
            kind: ModelKind::Logistic,
            feature_dim: 2,
            parameters: vec![0.0, 0.0, 0.0],
            training_meta: TrainingMeta {
                iterations: 0,
                learning_rate: 0.0,
                l2: 0.0,
                seed: 0,
                train_auc: None,
                positives: 0,
                negatives: 0,
            },
        };
        assert!(m.check().is_ok());
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(m.predict(&[0.0]), Err(SamplerError::FeatureDim { .. })));
    }

    #[test]
    fn predictions_are_clamped() {
        let m = PropensityModel {
            kind: ModelKind::Logistic,
            feature_dim: 1,
            parameters: vec![1000.0, 0.0],
            training_meta: TrainingMeta {
                iterations: 0,
                learning_rate: 0.0,
                l2: 0.0,
                seed: 0,
                train_auc: None,
                positives: 0,
                negatives: 0,
            },
        };
        assert_eq!(m.predict(&[1.0]).unwrap(), 1.0 - MIN_PROPENSITY);
        assert_eq!(m.predict(&[-1.0]).unwrap(), MIN_PROPENSITY);
    }
}
