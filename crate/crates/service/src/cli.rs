use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use goldset_core::model::{AgentDecision, EntityType, GoldLabel, PolicyRef, PolicyVersion};
use goldset_core::monitor::MonitorConfig;
use goldset_core::sampler::{ExperimentConfig, ModelKind, SamplingMode, Strategy};
use goldset_core::simlab::{NoisyAgentProfile, WorldConfig};
use goldset_core::store::write_atomic;
use serde::Serialize;

use crate::api::{self, ApiConfig};
use crate::error::{Result, ServiceError};
use crate::ops::{self, BaselineInput, LabelLine, PublishRequest, SampleRequest};
use crate::sim;
use crate::workspace::{jsonl_bytes, read_json, read_jsonl, Clock, Workspace};

#[derive(Debug, Parser)]
#[command(name = "goldset", version, about = "Golden-set curation, benchmarking and monitoring")]
pub struct Cli {
    /// Data directory holding the pool, versions, batches and monitors.
    #[arg(long, global = true, env = "GOLDSET_DATA_DIR")]
    pub pool: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add candidate items (JSONL) to the content pool.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Manage policy versions.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Select a batch of pool items for labeling.
    Sample(SampleArgs),
    /// Fill label tasks.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Publish a new golden-set version and print its id.
    Publish(PublishArgs),
    /// List published versions.
    Versions,
    /// Coverage and code distribution of a version.
    Profile {
        #[arg(long)]
        gds: String,
        /// Production sample (items JSONL) to measure divergence against.
        #[arg(long)]
        production: Option<PathBuf>,
    },
    /// Score one agent's decisions against a version.
    Evaluate {
        #[arg(long)]
        gds: String,
        #[arg(long)]
        decisions: PathBuf,
        /// Earlier report or evaluate output to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Cohen's kappa between two decision files.
    Agree {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Record agent decisions for the report endpoint.
    #[command(subcommand)]
    Agents(AgentsCommand),
    /// Label transitions between two versions under different policy versions.
    Delta {
        #[arg(long)]
        v1: String,
        #[arg(long)]
        v2: String,
        /// Also write the Sankey document here.
        #[arg(long)]
        sankey: Option<PathBuf>,
    },
    /// Drift and stability monitors.
    #[command(subcommand)]
    Monitor(MonitorCommand),
    /// Simulation lab.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "GOLDSET_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        /// Require this bearer token on every request.
        #[arg(long, env = "GOLDSET_TOKEN", hide_env_values = true)]
        token: Option<String>,
        /// Task lease in seconds.
        #[arg(long, default_value_t = 600)]
        lease_secs: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    Add {
        #[arg(long)]
        id: String,
        #[arg(long)]
        version: u32,
        /// Label set, positive label first for binary policies.
        #[arg(long, value_delimiter = ',', default_value = "positive,negative")]
        labels: Vec<String>,
        #[arg(long, value_enum, default_value_t = Entity::Pin)]
        entity: Entity,
        /// File with the guideline text.
        #[arg(long)]
        guideline: Option<PathBuf>,
    },
    Show {
        #[arg(long)]
        policy: PolicyRef,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Entity {
    Pin,
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Weighted,
    BottomK,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Propensity,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Logistic,
    BoostedStumps,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    gds: Option<String>,
    #[arg(long)]
    policy: Option<PolicyRef>,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Mode::Weighted)]
    mode: Mode,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, env = "GOLDSET_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum LabelsCommand {
    /// Apply label lines (JSONL: item_id, label, sme_id) to a batch.
    Import {
        #[arg(long)]
        batch: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// Show task counts of a batch.
    Status {
        #[arg(long)]
        batch: String,
    },
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    /// Publish the labeled tasks of this batch.
    #[arg(long, conflicts_with = "labels")]
    batch: Option<String>,
    /// Publish gold labels from a JSONL file.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    parent: Option<String>,
    #[arg(long)]
    policy: Option<PolicyRef>,
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Debug, Subcommand)]
pub enum AgentsCommand {
    Import {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_n: Option<usize>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long, env = "GOLDSET_SEED")]
    seed: Option<u64>,
}

impl MonitorArgs {
    fn apply(&self, mut config: MonitorConfig) -> MonitorConfig {
        if let Some(t) = self.threshold {
            config.threshold_pp = t;
        }
        if let Some(n) = self.min_n {
            config.min_n = n;
        }
        if let Some(r) = self.resamples {
            config.resamples = r;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config
    }
}

#[derive(Debug, Subcommand)]
pub enum MonitorCommand {
    /// Pin a version and record the agent's report on it.
    Baseline {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        config_digest: String,
        #[arg(long)]
        gds: String,
        #[arg(long)]
        decisions: PathBuf,
    },
    /// Score the agent on items added since a parent version.
    Drift {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        child: String,
        #[arg(long)]
        parent: String,
        #[arg(long)]
        decisions: PathBuf,
        #[command(flatten)]
        opts: MonitorArgs,
    },
    /// Re-score the agent on its pinned version.
    Stability {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        config_digest: String,
        #[arg(long)]
        decisions: PathBuf,
        #[command(flatten)]
        opts: MonitorArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Generate a synthetic world: items.jsonl, labels.jsonl, world.json.
    World {
        /// World configuration JSON; defaults apply to absent fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "GOLDSET_SEED")]
        seed: Option<u64>,
        /// Positive and negative label names.
        #[arg(long, value_delimiter = ',', default_value = "positive,negative")]
        labels: Vec<String>,
    },
    /// Run simulated agents (JSON list of profiles) over a version.
    Agents {
        #[arg(long)]
        gds: String,
        #[arg(long)]
        agents: PathBuf,
        /// Also record a majority panel of the first three agents under this id.
        #[arg(long)]
        majority: Option<String>,
    },
    /// Paired coverage-gain runs, propensity against uniform sampling.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 50)]
        initial: usize,
        #[arg(long, default_value_t = 50)]
        budget: usize,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = Mode::Weighted)]
        mode: Mode,
        /// Write every coverage trace here as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command: what to print and the exit code.
pub struct Output {
    pub stdout: String,
    pub code: i32,
}

impl Output {
    fn json(value: &impl Serialize) -> Result<Self> {
        Ok(Output {
            stdout: serde_json::to_string_pretty(value)?,
            code: 0,
        })
    }
}

fn workspace(pool: &Option<PathBuf>) -> Result<Workspace> {
    let root = pool.as_ref().ok_or_else(|| {
        ServiceError::invalid("missing_data_dir", "pass --pool or set GOLDSET_DATA_DIR")
    })?;
    Workspace::open(root)
}

fn decisions(path: &Path) -> Result<Vec<AgentDecision>> {
    read_jsonl(path)
}

fn mode(m: Mode) -> SamplingMode {
    match m {
        Mode::Weighted => SamplingMode::Weighted,
        Mode::BottomK => SamplingMode::BottomK,
    }
}

pub fn execute(cli: Cli) -> Result<Output> {
    let clock = Clock::from_env()?;
    match cli.command {
        Command::Ingest { input } => {
            let ws = workspace(&cli.pool)?;
            Output::json(&ops::ingest(&ws, ops::read_items(&input)?)?)
        }
        Command::Policy(PolicyCommand::Add {
            id,
            version,
            labels,
            entity,
            guideline,
        }) => {
            let ws = workspace(&cli.pool)?;
            let text = match guideline {
                Some(path) => std::fs::read_to_string(path)?,
                None => String::new(),
            };
            let entity = match entity {
                Entity::Pin => EntityType::Pin,
                Entity::Image => EntityType::Image,
                Entity::Text => EntityType::Text,
            };
            let policy = PolicyVersion::new(id, version, entity, labels, &text)?;
            ops::add_policy(&ws, &policy)?;
            Output::json(&policy)
        }
        Command::Policy(PolicyCommand::Show { policy }) => {
            let ws = workspace(&cli.pool)?;
            Output::json(&ws.store().policy(&policy)?)
        }
        Command::Sample(args) => {
            let ws = workspace(&cli.pool)?;
            let req = SampleRequest {
                gds: args.gds,
                policy: args.policy,
                k: args.k,
                mode: mode(args.mode),
                strategy: args.strategy.map(|s| match s {
                    StrategyArg::Propensity => Strategy::Propensity,
                    StrategyArg::Uniform => Strategy::Uniform,
                }),
                model: args.model.map(|m| match m {
                    ModelArg::Logistic => ModelKind::Logistic,
                    ModelArg::BoostedStumps => ModelKind::BoostedStumps,
                }),
                seed: args.seed,
            };
            Output::json(&ops::sample(&ws, &req)?)
        }
        Command::Labels(LabelsCommand::Import { batch, input }) => {
            let ws = workspace(&cli.pool)?;
            let lines: Vec<LabelLine> = read_jsonl(&input)?;
            Output::json(&ops::import_labels(&ws, &batch, &lines)?)
        }
        Command::Labels(LabelsCommand::Status { batch }) => {
            let ws = workspace(&cli.pool)?;
            Output::json(&ws.load_batch(&batch)?.summary())
        }
        Command::Publish(args) => {
            let ws = workspace(&cli.pool)?;
            let manifest = match (args.batch, args.labels) {
                (Some(batch), None) => {
                    let req = PublishRequest {
                        parent: args.parent,
                        policy: args.policy,
                        allow_partial: args.allow_partial,
                    };
                    ops::publish_batch(&ws, &batch, &req, clock.now())?
                }
                (None, Some(path)) => {
                    let labels: Vec<GoldLabel> = read_jsonl(&path)?;
                    let policy = match args.policy {
                        Some(p) => p,
                        None => match &args.parent {
                            Some(parent) => ws.store().get_version(parent)?.policy,
                            None => {
                                return Err(ServiceError::invalid(
                                    "policy_required",
                                    "pass --policy or --parent",
                                ))
                            }
                        },
                    };
                    ops::publish_labels(&ws, args.parent.as_deref(), labels, &policy, clock.now())?
                }
                _ => {
                    return Err(ServiceError::invalid(
                        "publish_source",
                        "pass exactly one of --batch or --labels",
                    ))
                }
            };
            Ok(Output {
                stdout: manifest.version_id,
                code: 0,
            })
        }
        Command::Versions => {
            let ws = workspace(&cli.pool)?;
            let store = ws.store();
            let manifests = store
                .list_versions()?
                .iter()
                .map(|id| Ok(store.get_version(id)?.manifest()))
                .collect::<Result<Vec<_>>>()?;
            Output::json(&manifests)
        }
        Command::Profile { gds, production } => {
            let ws = workspace(&cli.pool)?;
            let production = production.map(|p| ops::read_items(&p)).transpose()?;
            Output::json(&ops::profile(&ws, &gds, production.as_deref())?)
        }
        Command::Evaluate {
            gds,
            decisions: path,
            baseline,
        } => {
            let ws = workspace(&cli.pool)?;
            let baseline: Option<BaselineInput> = baseline.map(|p| read_json(&p)).transpose()?;
            Output::json(&ops::evaluate(&ws, &gds, &decisions(&path)?, baseline.as_ref())?)
        }
        Command::Agree { a, b } => Output::json(&ops::agree(&decisions(&a)?, &decisions(&b)?)?),
        Command::Agents(AgentsCommand::Import { input }) => {
            let ws = workspace(&cli.pool)?;
            Output::json(&ops::record_decisions(&ws, &decisions(&input)?)?)
        }
        Command::Delta { v1, v2, sankey } => {
            let ws = workspace(&cli.pool)?;
            let out = ops::delta(&ws, &v1, &v2)?;
            if let Some(path) = sankey {
                let mut bytes = serde_json::to_vec_pretty(&out.sankey)?;
                bytes.push(b'\n');
                write_atomic(&path, &bytes)?;
            }
            Output::json(&out)
        }
        Command::Monitor(cmd) => {
            let ws = workspace(&cli.pool)?;
            match cmd {
                MonitorCommand::Baseline {
                    agent,
                    config_digest,
                    gds,
                    decisions: path,
                } => Output::json(&ops::monitor_baseline(
                    &ws,
                    &agent,
                    &config_digest,
                    &gds,
                    &decisions(&path)?,
                    clock.now(),
                )?),
                MonitorCommand::Drift {
                    agent,
                    child,
                    parent,
                    decisions: path,
                    opts,
                } => {
                    let config = opts.apply(MonitorConfig::drift());
                    let alert = ops::monitor_drift(&ws, &agent, &child, &parent, &decisions(&path)?, &config)?;
                    let mut out = Output::json(&alert)?;
                    out.code = ops::alert_exit_code(&alert);
                    Ok(out)
                }
                MonitorCommand::Stability {
                    agent,
                    config_digest,
                    decisions: path,
                    opts,
                } => {
                    let config = opts.apply(MonitorConfig::stability());
                    let alert =
                        ops::monitor_stability(&ws, &agent, &config_digest, &decisions(&path)?, &config)?;
                    let mut out = Output::json(&alert)?;
                    out.code = ops::alert_exit_code(&alert);
                    Ok(out)
                }
            }
        }
        Command::Sim(SimCommand::World {
            config,
            out,
            seed,
            labels,
        }) => {
            let mut world: WorldConfig = match config {
                Some(path) => read_json(&path)?,
                None => WorldConfig::default(),
            };
            if let Some(seed) = seed {
                world.seed = seed;
            }
            let [pos, neg] = labels.as_slice() else {
                return Err(ServiceError::invalid("bad_labels", "pass two labels: positive,negative"));
            };
            Output::json(&sim::write_world(&world, [pos, neg], &out)?)
        }
        Command::Sim(SimCommand::Agents { gds, agents, majority }) => {
            let ws = workspace(&cli.pool)?;
            let profiles: Vec<NoisyAgentProfile> = read_json(&agents)?;
            Output::json(&sim::run_agents(&ws, &gds, &profiles, majority.as_deref())?)
        }
        Command::Sim(SimCommand::Experiment {
            config,
            seeds,
            first_seed,
            initial,
            budget,
            rounds,
            mode: m,
            out,
        }) => {
            let world: WorldConfig = match config {
                Some(path) => read_json(&path)?,
                None => WorldConfig::default(),
            };
            let experiment = ExperimentConfig {
                budget,
                rounds,
                mode: mode(m),
                ..ExperimentConfig::default()
            };
            let (traces, summary) =
                sim::run_experiment(&world, &experiment, initial, first_seed..first_seed + seeds)?;
            if let Some(path) = out {
                write_atomic(&path, &jsonl_bytes(&traces)?)?;
            }
            Output::json(&summary)
        }
        Command::Serve {
            bind,
            token,
            lease_secs,
        } => {
            let ws = workspace(&cli.pool)?;
            let config = ApiConfig {
                lease: std::time::Duration::from_secs(lease_secs),
                bearer_token: token.filter(|t| !t.is_empty()),
                clock,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(api::serve(ws, config, &bind))?;
            Ok(Output {
                stdout: String::new(),
                code: 0,
            })
        }
    }
}

/// Parses arguments, runs the command and reports errors as JSON on stderr.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(out) => {
            if !out.stdout.is_empty() {
                let mut stdout = std::io::stdout().lock();
                let _ = writeln!(stdout, "{}", out.stdout);
            }
            out.code
        }
        Err(e) => {
            let body = serde_json::to_string(&e.body()).unwrap_or_default();
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
