//! Synthetic stand-ins for production data: Gaussian-mixture embeddings, a
//! 256-code k-means quantizer and noisy labeler agents.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    reference_epoch, AgentDecision, ContentItem, Embedding, GoldLabel, PolicyRef, PolicyVersion,
    SemanticCode, Source, CODEBOOK_SIZE, DEFAULT_EMBEDDING_DIM,
};
use crate::store::{publish_version_at, ContentPool, GdsVersion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("need at least {needed} samples to fit the quantizer, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("policy {0} is not binary")]
    NonBinaryPolicy(PolicyRef),
    #[error("golden set is under {truth}, agent asked to follow {given}")]
    PolicyMismatch { truth: PolicyRef, given: PolicyRef },
    #[error("decision sets cover different items")]
    Misaligned,
    #[error("no majority label for item `{0}`")]
    NoMajority(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::BadConfig(_) => "bad_config",
            SimError::TooFewSamples { .. } => "too_few_samples",
            SimError::NonBinaryPolicy(_) => "non_binary_policy",
            SimError::PolicyMismatch { .. } => "policy_mismatch",
            SimError::Misaligned => "misaligned",
            SimError::NoMajority(_) => "no_majority",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Deterministic RNG for a named substream of a seed.
pub fn substream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Nearest-centroid vector quantizer with a 256-entry codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance, or `None` once the running sum reaches `bound`. The
/// summation order matches [`sq_dist`].
fn sq_dist_below(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in ca.iter().zip(cb) {
            acc += (x - y) * (x - y);
        }
        if acc >= bound {
            return None;
        }
    }
    Some(acc)
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        if let Some(d) = sq_dist_below(c, point, best.1) {
            best = (i, d);
        }
    }
    best
}

impl Quantizer {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn quantize(&self, embedding: &[f64]) -> SemanticCode {
        let (index, _) = nearest(&self.centroids, embedding);
        SemanticCode::from_index(index as u8)
    }

    pub fn quantize_all(&self, embeddings: &[Vec<f64>]) -> Vec<SemanticCode> {
        embeddings.par_iter().map(|e| self.quantize(e)).collect()
    }
}

const KMEANS_ITERATIONS: usize = 25;
/// Candidates per greedy seeding step, 2 + ln(K) rounded down.
const SEEDING_TRIALS: usize = 7;
const KMEANS_RESTARTS: usize = 4;

/// k-means with K = 256: greedy k-means++ seeding keyed on `seed`, then a fixed
/// number of Lloyd iterations. Clusters that go empty are re-seeded with the
/// point currently farthest from its centroid.
pub fn fit_quantizer(samples: &[Vec<f64>], seed: u64) -> Result<Quantizer> {
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let centroids = kmeans_run(samples, seed, restart)?;
        let inertia: f64 = samples.par_iter().map(|s| nearest(&centroids, s).1).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centroids));
        }
    }
    let (_, centroids) = best.expect("at least one restart");
    Ok(Quantizer { centroids, seed })
}

fn kmeans_run(samples: &[Vec<f64>], seed: u64, restart: usize) -> Result<Vec<Vec<f64>>> {
    let k = CODEBOOK_SIZE;
    if samples.len() < k {
        return Err(SimError::TooFewSamples {
            needed: k,
            got: samples.len(),
        });
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(SimError::BadConfig("samples must share a nonzero dimension".into()));
    }
    let mut rng = substream_rng(seed, &format!("kmeans++/{restart}"));

    let mut centroids = Vec::with_capacity(k);
    centroids.push(samples[rng.random_range(0..samples.len())].clone());
    let mut d2: Vec<f64> = samples.par_iter().map(|s| sq_dist(s, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            let pick = rng.random_range(0..samples.len());
            centroids.push(samples[pick].clone());
            continue;
        }
        // Greedy seeding: draw several D^2-weighted candidates, keep the one
        // that lowers the potential most.
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..SEEDING_TRIALS {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            let c = &samples[chosen];
            let updated: Vec<f64> = d2
                .par_iter()
                .zip(samples.par_iter())
                .map(|(d, s)| sq_dist_below(s, c, *d).unwrap_or(*d))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, chosen, updated));
            }
        }
        let (_, chosen, updated) = best.expect("at least one seeding trial");
        d2 = updated;
        centroids.push(samples[chosen].clone());
    }

    for _ in 0..KMEANS_ITERATIONS {
        let assignment: Vec<(usize, f64)> =
            samples.par_iter().map(|s| nearest(&centroids, s)).collect();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (s, (c, _)) in samples.iter().zip(&assignment) {
            counts[*c] += 1;
            for (acc, v) in sums[*c].iter_mut().zip(s) {
                *acc += v;
            }
        }
        // Farthest points, deterministic order, for re-seeding empty clusters.
        let mut by_distance: Vec<usize> = (0..samples.len()).collect();
        by_distance.sort_by(|&a, &b| assignment[b].1.total_cmp(&assignment[a].1).then(a.cmp(&b)));
        let mut donors = by_distance.into_iter();
        let previous = centroids.clone();
        for c in 0..k {
            if counts[c] == 0 {
                if let Some(p) = donors.next() {
                    centroids[c] = samples[p].clone();
                }
            } else {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|v| v / n).collect();
            }
        }
        if centroids == previous {
            break;
        }
    }
    Ok(centroids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClusterWeights {
    Uniform,
    Zipf { s: f64 },
    Explicit { weights: Vec<f64> },
}

/// Configuration for [`generate_world`]; also the JSON world-config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_items: usize,
    pub dim: usize,
    pub clusters: usize,
    pub weights: ClusterWeights,
    /// Standard deviation of cluster-mean coordinates.
    pub mean_scale: f64,
    /// Within-cluster standard deviation.
    pub noise_sd: f64,
    /// Positive rate per cluster; a single entry applies to all clusters.
    pub positive_rates: Vec<f64>,
    pub seed: u64,
    /// Size of the reference sample the quantizer is fitted on. The sample is
    /// drawn with equal weight per cluster.
    pub quantizer_samples: usize,
    pub id_prefix: String,
    pub source: Source,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_items: 10_000,
            dim: DEFAULT_EMBEDDING_DIM,
            clusters: CODEBOOK_SIZE,
            weights: ClusterWeights::Uniform,
            mean_scale: 1.0,
            noise_sd: 0.1,
            positive_rates: vec![0.5],
            seed: 0,
            quantizer_samples: 8_192,
            id_prefix: "item-".into(),
            source: Source::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub cluster_means: Vec<Vec<f64>>,
    pub cluster_weights: Vec<f64>,
    pub positive_rate_per_cluster: Vec<f64>,
    pub dim: usize,
    pub seed: u64,
}

impl SyntheticWorld {
    fn from_config(config: &WorldConfig) -> Result<Self> {
        if config.clusters == 0 {
            return Err(SimError::BadConfig("need at least one cluster".into()));
        }
        if config.dim == 0 {
            return Err(SimError::BadConfig("dim must be positive".into()));
        }
        if !(config.noise_sd >= 0.0 && config.mean_scale >= 0.0) {
            return Err(SimError::BadConfig("scales must be non-negative".into()));
        }
        let raw: Vec<f64> = match &config.weights {
            ClusterWeights::Uniform => vec![1.0; config.clusters],
            ClusterWeights::Zipf { s } => (1..=config.clusters)
                .map(|rank| (rank as f64).powf(-s))
                .collect(),
            ClusterWeights::Explicit { weights } => {
                if weights.len() != config.clusters {
                    return Err(SimError::BadConfig(format!(
                        "{} weights for {} clusters",
                        weights.len(),
                        config.clusters
                    )));
                }
                weights.clone()
            }
        };
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SimError::BadConfig("weights must be finite and non-negative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(SimError::BadConfig("weights sum to zero".into()));
        }
        let positive_rate_per_cluster = match config.positive_rates.len() {
            1 => vec![config.positive_rates[0]; config.clusters],
            n if n == config.clusters => config.positive_rates.clone(),
            n => {
                return Err(SimError::BadConfig(format!(
                    "{n} positive rates for {} clusters",
                    config.clusters
                )))
            }
        };
        if positive_rate_per_cluster
            .iter()
            .any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(SimError::BadConfig("positive rates must lie in [0, 1]".into()));
        }
        let mut rng = substream_rng(config.seed, "means");
        let normal = Normal::new(0.0, config.mean_scale.max(f64::MIN_POSITIVE))
            .map_err(|e| SimError::BadConfig(e.to_string()))?;
        let cluster_means = (0..config.clusters)
            .map(|_| (0..config.dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        Ok(SyntheticWorld {
            cluster_means,
            cluster_weights: raw.iter().map(|w| w / total).collect(),
            positive_rate_per_cluster,
            dim: config.dim,
            seed: config.seed,
        })
    }

    fn sample_point(&self, cluster: usize, noise: &Normal<f64>, rng: &mut impl Rng) -> Vec<f64> {
        self.cluster_means[cluster]
            .iter()
            .map(|m| m + noise.sample(rng))
            .collect()
    }
}

/// A generated world: the mixture, a pool of quantized items, the fitted
/// quantizer and the latent truth for each item.
#[derive(Debug, Clone)]
pub struct GeneratedWorld {
    pub world: SyntheticWorld,
    pub pool: ContentPool,
    pub quantizer: Quantizer,
    /// Latent cluster of each item.
    pub clusters: BTreeMap<String, usize>,
    /// Whether each item is truly positive.
    pub truth: BTreeMap<String, bool>,
}

impl GeneratedWorld {
    /// Gold labels for the given items under a binary policy.
    pub fn gold_labels<'a>(
        &self,
        policy: &PolicyVersion,
        item_ids: impl IntoIterator<Item = &'a str>,
        sme_id: &str,
    ) -> Vec<GoldLabel> {
        item_ids
            .into_iter()
            .filter_map(|id| {
                let positive = *self.truth.get(id)?;
                Some(GoldLabel {
                    item_id: id.to_string(),
                    policy: policy.reference(),
                    label: policy.label_set[usize::from(!positive)].clone(),
                    sme_id: sme_id.to_string(),
                    adjudicated: true,
                })
            })
            .collect()
    }
}

/// A starting golden set of `size` items drawn uniformly from the pool and
/// labeled with the latent truth.
pub fn initial_gds(
    world: &GeneratedWorld,
    policy: &PolicyVersion,
    size: usize,
    seed: u64,
) -> Result<GdsVersion> {
    if !policy.is_binary() {
        return Err(SimError::NonBinaryPolicy(policy.reference()));
    }
    let ids: Vec<&str> = world.pool.items().map(|i| i.item_id.as_str()).collect();
    if size == 0 || size > ids.len() {
        return Err(SimError::BadConfig(format!(
            "initial size {size} outside 1..={}",
            ids.len()
        )));
    }
    let mut rng = substream_rng(seed, "init");
    let picked = rand::seq::index::sample(&mut rng, ids.len(), size)
        .into_iter()
        .map(|i| ids[i]);
    let labels = world.gold_labels(policy, picked, "oracle");
    publish_version_at(&world.pool, None, labels, policy, reference_epoch())
        .map_err(|e| SimError::BadConfig(e.to_string()))
}

pub fn generate_world(config: &WorldConfig) -> Result<GeneratedWorld> {
    let world = SyntheticWorld::from_config(config)?;
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| SimError::BadConfig(e.to_string()))?;

    let mut ref_rng = substream_rng(config.seed, "quantizer-reference");
    let reference: Vec<Vec<f64>> = (0..config.quantizer_samples.max(CODEBOOK_SIZE))
        .map(|i| world.sample_point(i % config.clusters, &noise, &mut ref_rng))
        .collect();
    let quantizer = fit_quantizer(&reference, config.seed)?;

    let mut rng = substream_rng(config.seed, "items");
    let picker = WeightedIndex::new(&world.cluster_weights)
        .map_err(|e| SimError::BadConfig(e.to_string()))?;
    let mut embeddings = Vec::with_capacity(config.n_items);
    let mut latent = Vec::with_capacity(config.n_items);
    for _ in 0..config.n_items {
        let cluster = picker.sample(&mut rng);
        embeddings.push(world.sample_point(cluster, &noise, &mut rng));
        let positive = rng.random_bool(world.positive_rate_per_cluster[cluster]);
        latent.push((cluster, positive));
    }
    let codes = quantizer.quantize_all(&embeddings);
    let width = config.n_items.saturating_sub(1).to_string().len().max(6);
    let mut clusters = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let items: Vec<ContentItem> = embeddings
        .into_iter()
        .zip(codes)
        .zip(latent)
        .enumerate()
        .map(|(i, ((embedding, code), (cluster, positive)))| {
            let item_id = format!("{}{:0width$}", config.id_prefix, i);
            clusters.insert(item_id.clone(), cluster);
            truth.insert(item_id.clone(), positive);
            ContentItem {
                item_id,
                embedding: Embedding(embedding),
                code,
                source: config.source,
                created_at: reference_epoch(),
            }
        })
        .collect();
    let mut pool = ContentPool::with_dim(config.dim);
    pool.ingest_candidates(items)
        .map_err(|e| SimError::BadConfig(e.to_string()))?;
    Ok(GeneratedWorld {
        world,
        pool,
        quantizer,
        clusters,
        truth,
    })
}

/// Anything that produces decisions for the items of a golden set. Real
/// model adapters implement this alongside the simulated profiles.
pub trait DecisionAgent {
    fn agent_id(&self) -> &str;

    /// Digest of the agent's configuration (for an LLM, its prompt).
    fn config_digest(&self) -> String;

    fn decide(&self, gds: &GdsVersion, policy: &PolicyVersion) -> Result<Vec<AgentDecision>>;
}

/// Class-conditional noisy labeler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyAgentProfile {
    pub agent_id: String,
    /// P(positive decision | gold positive).
    pub sensitivity: f64,
    /// P(negative decision | gold negative).
    pub specificity: f64,
    pub seed: u64,
    /// Stand-in for a prompt hash; derived from the profile when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl NoisyAgentProfile {
    pub fn new(agent_id: impl Into<String>, sensitivity: f64, specificity: f64, seed: u64) -> Self {
        NoisyAgentProfile {
            agent_id: agent_id.into(),
            sensitivity,
            specificity,
            seed,
            config_digest: None,
        }
    }

    /// A labeler with equal sensitivity and specificity.
    pub fn symmetric(agent_id: impl Into<String>, accuracy: f64, seed: u64) -> Self {
        Self::new(agent_id, accuracy, accuracy, seed)
    }
}

impl DecisionAgent for NoisyAgentProfile {
    fn agent_id(&self) -> &str {
        &self.agent_id
    }

    fn config_digest(&self) -> String {
        self.config_digest.clone().unwrap_or_else(|| {
            let text = format!(
                "{}|{}|{}",
                self.agent_id, self.sensitivity, self.specificity
            );
            hex::encode(Sha256::digest(text.as_bytes()))
        })
    }

    fn decide(&self, gds: &GdsVersion, policy: &PolicyVersion) -> Result<Vec<AgentDecision>> {
        simulate_agent(self, gds, policy)
    }
}

/// Independent Bernoulli decisions per item, driven by a substream keyed on
/// `(seed, agent_id)` so agents never share randomness.
pub fn simulate_agent(
    profile: &NoisyAgentProfile,
    gds: &GdsVersion,
    policy: &PolicyVersion,
) -> Result<Vec<AgentDecision>> {
    for p in [profile.sensitivity, profile.specificity] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::BadConfig(format!(
                "agent `{}` has a rate outside [0, 1]",
                profile.agent_id
            )));
        }
    }
    if gds.policy != policy.reference() {
        return Err(SimError::PolicyMismatch {
            truth: gds.policy.clone(),
            given: policy.reference(),
        });
    }
    if !policy.is_binary() {
        return Err(SimError::NonBinaryPolicy(policy.reference()));
    }
    let positive = policy.positive_label();
    let negative = &policy.label_set[1];
    let mut rng = substream_rng(profile.seed, &profile.agent_id);
    let run_id = format!("seed-{}", profile.seed);
    Ok(gds
        .records
        .values()
        .map(|gold| {
            let correct = if gold.label == positive {
                rng.random_bool(profile.sensitivity)
            } else {
                rng.random_bool(profile.specificity)
            };
            let gold_positive = gold.label == positive;
            let label = if correct == gold_positive { positive } else { negative };
            AgentDecision {
                agent_id: profile.agent_id.clone(),
                run_id: run_id.clone(),
                item_id: gold.item_id.clone(),
                policy: policy.reference(),
                label: label.to_string(),
                decided_at: reference_epoch(),
            }
        })
        .collect())
}

/// Per-item majority of three aligned decision sets.
pub fn majority_vote(sets: [&[AgentDecision]; 3]) -> Result<Vec<AgentDecision>> {
    let maps: Vec<BTreeMap<&str, &AgentDecision>> = sets
        .iter()
        .map(|set| set.iter().map(|d| (d.item_id.as_str(), d)).collect())
        .collect();
    for (map, set) in maps.iter().zip(sets) {
        if map.len() != set.len() {
            return Err(SimError::Misaligned);
        }
    }
    if !maps[1..].iter().all(|m| m.keys().eq(maps[0].keys())) {
        return Err(SimError::Misaligned);
    }
    let agent_id = format!(
        "majority({})",
        sets.iter()
            .map(|s| s.first().map_or("", |d| d.agent_id.as_str()))
            .collect::<Vec<_>>()
            .join(",")
    );
    maps[0]
        .iter()
        .map(|(item, first)| {
            let labels = [
                first.label.as_str(),
                maps[1][item].label.as_str(),
                maps[2][item].label.as_str(),
            ];
            let winner = if labels[0] == labels[1] || labels[0] == labels[2] {
                labels[0]
            } else if labels[1] == labels[2] {
                labels[1]
            } else {
                return Err(SimError::NoMajority(item.to_string()));
            };
            Ok(AgentDecision {
                agent_id: agent_id.clone(),
                run_id: first.run_id.clone(),
                item_id: item.to_string(),
                policy: first.policy.clone(),
                label: winner.to_string(),
                decided_at: first.decided_at,
            })
        })
        .collect()
}
