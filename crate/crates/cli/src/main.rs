//! `cf`: learn feature-space domain constraints from binary corpora and
//! apply them — robust feature transform, constraint-aware attacks,
//! validity scoring and adversarial retraining.
//!
//! Every command reads its inputs, writes machine-readable JSON artifacts
//! to explicit `--out` paths (inputs are never mutated), prints a short
//! human summary, and drops a replayable run manifest next to its primary
//! output. Log level comes from the `CF_LOG` env var.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad input data or artifacts (exit code 3).
    Data(String),
    /// Unexpected internal failure (exit code 4).
    Internal(String),
}

impl CliError {
    fn data(msg: impl Into<String>) -> CliError {
        CliError::Data(msg.into())
    }

    fn internal(msg: impl Into<String>) -> CliError {
        CliError::Internal(msg.into())
    }
}

impl From<cf_core::Error> for CliError {
    fn from(e: cf_core::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal: {m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    SparseText,
    DenseCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopKScopeArg {
    All,
    Malware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackModeArg {
    Unconstrained,
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepairArg {
    HighestPhi,
    Prototype,
}

#[derive(Parser, Debug)]
#[command(
    name = "cf",
    version,
    about = "feature-space domain constraints toolkit"
)]
pub struct Cli {
    /// Global seed; stages derive their own sub-seeds from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel stages (default: all cores). Results
    /// do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with planted dependency structure.
    Synth(SynthArgs),
    /// Learn the constraint set from a dataset.
    Learn(LearnArgs),
    /// Transform a dataset into the robust feature space.
    Transform(TransformArgs),
    /// Train the linear detector.
    Train(TrainArgs),
    /// Run a feature-addition evasion campaign.
    Attack(AttackArgs),
    /// Re-score an existing campaign against a constraint set.
    Csr(CsrArgs),
    /// Adversarial retraining: generate, augment, retrain, compare.
    Retrain(RetrainArgs),
    /// Evaluate a detector on a dataset.
    Evaluate(EvaluateArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Planted-structure spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    /// Constraint-set output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Edge dump output; defaults to `<out>.edges`.
    #[arg(long)]
    pub edges_out: Option<PathBuf>,
    /// Forest dump output (debug: feature, root, predecessor, cost).
    #[arg(long)]
    pub forest_out: Option<PathBuf>,
    /// Learning stats report output (JSON).
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// Keep only phi values strictly above this.
    #[arg(long, default_value_t = 0.0)]
    pub min_phi: f64,
    /// Dense-region threshold for prototype selection.
    #[arg(long, default_value_t = 0.9)]
    pub dense_threshold: f64,
    /// Unassign features whose path cost falls below this.
    #[arg(long, default_value_t = 0.0)]
    pub min_cost: f64,
    /// Keep only the k most frequent features before learning.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Which rows count toward top-k frequencies.
    #[arg(long, value_enum, default_value_t = TopKScopeArg::All)]
    pub top_k_scope: TopKScopeArg,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    /// Constraint set (JSON) to compile; not needed with --map.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Reuse a previously compiled map instead of building one.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Where to write the compiled map; defaults to `<out>.map.json`.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
    /// Drop unclustered features instead of passing them through.
    #[arg(long)]
    pub drop_singletons: bool,
    /// Sigmoid gate threshold.
    #[arg(long, default_value_t = cf_core::transform::DEFAULT_GATE_THRESHOLD)]
    pub threshold: f64,
    /// Transformed dataset output (sparse text).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    /// The attacked model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Compose the attacked model with this robust map (the attack then
    /// operates on original features and probes the pipeline).
    #[arg(long)]
    pub attacked_map: Option<PathBuf>,
    /// Linear model used to rank candidates when the attacked model is a
    /// pipeline; required with --attacked-map.
    #[arg(long)]
    pub ranker: Option<PathBuf>,
    /// Malware dataset; benign rows are ignored.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    #[arg(long, value_enum, default_value_t = AttackModeArg::Unconstrained)]
    pub mode: AttackModeArg,
    #[arg(long, default_value_t = cf_core::attack::DEFAULT_MAX_ADDED)]
    pub max_added: usize,
    /// Constraint set; required in constrained mode, optional otherwise
    /// (used for csr scoring).
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Edge dump matching the constraint set, for exact phi-ranked
    /// repair; defaults to `<constraints>.edges` when present.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RepairArg::HighestPhi)]
    pub repair: RepairArg,
    /// Transfer target model; defaults to the attacked model.
    #[arg(long)]
    pub target_model: Option<PathBuf>,
    /// Robust map composing the transfer target.
    #[arg(long)]
    pub target_map: Option<PathBuf>,
    /// Campaign report output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CsrArgs {
    /// Campaign report to re-score.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub constraints: PathBuf,
    /// The dataset the campaign ran on (for base vectors).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RetrainArgs {
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    /// Base model to harden; trained from --data when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Held-out dataset for the before/after comparison; defaults to the
    /// training data.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AttackModeArg::Constrained)]
    pub mode: AttackModeArg,
    /// Number of malware samples to perturb.
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    /// Adversarial variants per sample.
    #[arg(long, default_value_t = 20)]
    pub variants: usize,
    /// Greedy jitter width for variant diversity.
    #[arg(long, default_value_t = cf_core::retrain::DEFAULT_JITTER_TOP_Q)]
    pub jitter_q: usize,
    #[arg(long, default_value_t = cf_core::attack::DEFAULT_MAX_ADDED)]
    pub max_added: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Retrained model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Before/after comparison report; defaults to `<out>.compare.json`.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Robust map composing the detector; data stays in the original
    /// space.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::SparseText)]
    pub format: DataFormat,
    /// Evaluation report output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat.
    #[arg(long)]
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CF_LOG")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // ignore the error if a pool already exists (replay within tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match commands::dispatch(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(4)
        }
    }
}
