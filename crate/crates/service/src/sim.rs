//! Simulation-lab entry points for the CLI.

use std::fs;
use std::path::Path;

use goldset_core::metrics::semantic_coverage;
use goldset_core::model::PolicyVersion;
use goldset_core::sampler::{coverage_gain_experiment, CoverageTrace, ExperimentConfig, Strategy};
use goldset_core::simlab::{
    generate_world, initial_gds, majority_vote, simulate_agent, DecisionAgent, NoisyAgentProfile,
    WorldConfig,
};
use goldset_core::store::write_atomic;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::ops::{record_decisions, LabelLine};
use crate::workspace::{jsonl_bytes, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub n_items: usize,
    pub dim: usize,
    pub clusters: usize,
    pub positives: usize,
    pub coverage: f64,
}

/// Generates a world and writes `items.jsonl` (ingestable), `labels.jsonl`
/// (importable truth, labels taken from `label_set`) and `world.json`.
pub fn write_world(config: &WorldConfig, label_set: [&str; 2], out: &Path) -> Result<WorldSummary> {
    let world = generate_world(config)?;
    fs::create_dir_all(out)?;
    let items: Vec<_> = world.pool.items().cloned().collect();
    write_atomic(&out.join("items.jsonl"), &jsonl_bytes(&items)?)?;
    let labels: Vec<LabelLine> = world
        .truth
        .iter()
        .map(|(id, &positive)| LabelLine {
            item_id: id.clone(),
            label: Some(label_set[usize::from(!positive)].to_string()),
            sme_id: Some("oracle".into()),
            idempotency_key: None,
            skip: false,
        })
        .collect();
    write_atomic(&out.join("labels.jsonl"), &jsonl_bytes(&labels)?)?;
    let mut world_json = serde_json::to_vec_pretty(&world.world)?;
    world_json.push(b'\n');
    write_atomic(&out.join("world.json"), &world_json)?;
    Ok(WorldSummary {
        n_items: items.len(),
        dim: world.world.dim,
        clusters: world.world.cluster_means.len(),
        positives: world.truth.values().filter(|p| **p).count(),
        coverage: semantic_coverage(&items).coverage,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub agent_id: String,
    pub config_digest: String,
    pub decisions: usize,
}

/// Runs simulated agents over a golden set and records their decisions.
/// With `majority_id`, the first three profiles also form a majority panel.
pub fn run_agents(
    ws: &Workspace,
    version_id: &str,
    profiles: &[NoisyAgentProfile],
    majority_id: Option<&str>,
) -> Result<Vec<AgentRun>> {
    let store = ws.store();
    let gds = store.get_version(version_id)?;
    let policy = store.policy(&gds.policy)?;
    let mut runs = Vec::new();
    let mut sets = Vec::new();
    for profile in profiles {
        let decisions = simulate_agent(profile, &gds, &policy)?;
        record_decisions(ws, &decisions)?;
        runs.push(AgentRun {
            agent_id: profile.agent_id.clone(),
            config_digest: profile.config_digest(),
            decisions: decisions.len(),
        });
        sets.push(decisions);
    }
    if let Some(id) = majority_id {
        let [a, b, c] = match sets.as_slice() {
            [a, b, c, ..] => [a.as_slice(), b.as_slice(), c.as_slice()],
            _ => {
                return Err(ServiceError::invalid(
                    "too_few_agents",
                    "a majority panel needs at least three agents",
                ))
            }
        };
        let mut panel = majority_vote([a, b, c])?;
        for d in &mut panel {
            d.agent_id = id.to_string();
        }
        record_decisions(ws, &panel)?;
        runs.push(AgentRun {
            agent_id: id.to_string(),
            config_digest: String::new(),
            decisions: panel.len(),
        });
    }
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seeds: usize,
    /// Seeds where propensity sampling ended with strictly higher coverage.
    pub propensity_wins: usize,
    pub mean_final_propensity: f64,
    pub mean_final_uniform: f64,
}

/// Paired coverage-gain runs: for every seed both strategies start from the
/// same world and the same uniformly drawn initial golden set.
pub fn run_experiment(
    world: &WorldConfig,
    experiment: &ExperimentConfig,
    initial_size: usize,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<(Vec<CoverageTrace>, ExperimentSummary)> {
    let policy = PolicyVersion::binary("sim", 1);
    let mut traces = Vec::new();
    let (mut wins, mut n, mut sum_p, mut sum_u) = (0, 0, 0.0, 0.0);
    for seed in seeds {
        let generated = generate_world(&WorldConfig {
            seed,
            ..world.clone()
        })?;
        let gds = initial_gds(&generated, &policy, initial_size, seed)?;
        let p = coverage_gain_experiment(&generated.pool, &gds, Strategy::Propensity, experiment, seed)?;
        let u = coverage_gain_experiment(&generated.pool, &gds, Strategy::Uniform, experiment, seed)?;
        let (fp, fu) = (final_coverage(&p), final_coverage(&u));
        wins += usize::from(fp > fu);
        sum_p += fp;
        sum_u += fu;
        n += 1;
        traces.push(p);
        traces.push(u);
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    Ok((
        traces,
        ExperimentSummary {
            seeds: n,
            propensity_wins: wins,
            mean_final_propensity: mean(sum_p),
            mean_final_uniform: mean(sum_u),
        },
    ))
}

pub fn final_coverage(trace: &CoverageTrace) -> f64 {
    trace.coverage.last().copied().unwrap_or(0.0)
}
