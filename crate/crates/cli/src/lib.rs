//! Command-line front end: data generation, training, evaluation, routing
//! and the hyperparameter, lineage-noise and sample-size experiments.
//!
//! Every command is deterministic given its seeds and writes plot-ready CSV.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lineage_core::dataset::Split;
use lineage_core::pipeline::Method;

mod commands;
mod output;
pub mod settings;

use settings::{unit_fraction, DataArgs, HyperArgs};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "LINEAGE_PREDICT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lineage-predict", version, about = "Lineage-aware performance prediction for derived models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ecosystem with known latent abilities.
    Gen(GenArgs),
    /// Fit a predictor and write its checkpoint and training log.
    Train(TrainArgs),
    /// Score a checkpoint (or MLA) on one split.
    Eval(EvalArgs),
    /// Route instances among a model pool under several strategies.
    Route(RouteArgs),
    /// Grid search over the penalty weights, scored on the dev split.
    Sweep(SweepArgs),
    /// Retrain after adding or removing lineage edges.
    Noise(NoiseArgs),
    /// Retrain with at most t observations per training model.
    Tsweep(TsweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lrmf,
    Mf,
    Irt,
    Ncf,
    Mla,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lrmf => Method::Lrmf,
            MethodArg::Mf => Method::Mf,
            MethodArg::Irt => Method::Irt,
            MethodArg::Ncf => Method::Ncf,
            MethodArg::Mla => Method::Mla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMethodArg {
    Lrmf,
    Mf,
    Irt,
    Ncf,
}

impl From<TrainMethodArg> for Method {
    fn from(m: TrainMethodArg) -> Self {
        match m {
            TrainMethodArg::Lrmf => Method::Lrmf,
            TrainMethodArg::Mf => Method::Mf,
            TrainMethodArg::Irt => Method::Irt,
            TrainMethodArg::Ncf => Method::Ncf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    /// Test-split models only.
    Test,
    /// Every model in the dataset.
    All,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON generator settings; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of independent base models.
    #[arg(long)]
    pub n_roots: Option<usize>,
    /// Children spawned by each model of the previous generation.
    #[arg(long)]
    pub children_per_generation: Option<usize>,
    /// Number of derivation rounds after the roots.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Probability that a child merges two parents.
    #[arg(long, value_parser = unit_fraction)]
    pub merge_fraction: Option<f64>,
    /// Number of instances.
    #[arg(long)]
    pub n_instances: Option<usize>,
    /// Number of benchmarks the instances are divided among.
    #[arg(long)]
    pub n_benchmarks: Option<usize>,
    /// Dimension of the true abilities.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Per-coordinate drift from parent to child.
    #[arg(long)]
    pub drift_sigma: Option<f64>,
    /// Standard deviation of the true logits.
    #[arg(long)]
    pub logit_scale: Option<f64>,
    /// Noise separating instance embeddings from true difficulties.
    #[arg(long)]
    pub embed_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model family to fit.
    #[arg(long, value_enum, default_value = "lrmf")]
    pub method: TrainMethodArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training-log CSV (defaults to the checkpoint path with `.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, required_unless_present = "mla", conflicts_with = "mla")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate lineage averaging instead of a checkpoint.
    #[arg(long)]
    pub mla: bool,
    /// Split whose models are scored.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    /// Predictor checkpoint as NAME=PATH or PATH; repeatable.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<String>,
    /// Add lineage averaging as a routing strategy.
    #[arg(long)]
    pub mla: bool,
    /// Models to route among: the test split or every model.
    #[arg(long, value_enum, default_value = "test")]
    pub pool: PoolArg,
    /// Seed of the random-routing strategy.
    #[arg(long, default_value_t = 0)]
    pub random_seed: u64,
    /// Route only instances every pool model was evaluated on.
    #[arg(long)]
    pub observed_only: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Directory for routing.json, routing_scores.csv and routing_assignments.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Lineage weights to try.
    #[arg(long, value_delimiter = ',', default_value = "0,1e-9,1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1")]
    pub lambda_model_grid: Vec<f64>,
    /// Instance-similarity weights to try.
    #[arg(long, value_delimiter = ',', default_value = "0,1e-9,1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1")]
    pub lambda_instance_grid: Vec<f64>,
    /// L2 weights to try (defaults to the configured one).
    #[arg(long, value_delimiter = ',')]
    pub lambda_l2_grid: Vec<f64>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Result CSV; completed cells already in it are skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Signed edge fractions: negative removes, positive adds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.4,-0.2,0,0.2,0.4")]
    pub fractions: Vec<f64>,
    /// Methods to retrain at each fraction.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lrmf,mla")]
    pub methods: Vec<MethodArg>,
    /// Seed for choosing which edges change.
    #[arg(long, default_value_t = 0)]
    pub perturb_seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Result CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TsweepArgs {
    /// Observations kept per training model.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100,200,500,1000")]
    pub t: Vec<usize>,
    /// Methods to retrain at each t.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lrmf,mf")]
    pub methods: Vec<MethodArg>,
    /// Seed for choosing which observations are kept.
    #[arg(long, default_value_t = 0)]
    pub subsample_seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Result CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Limits the global worker pool according to [`THREADS_ENV`].
fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    if n == 0 {
        anyhow::bail!("{THREADS_ENV} must be a positive integer, got 0");
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Route(a) => commands::route(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Noise(a) => commands::noise(&a),
        Command::Tsweep(a) => commands::tsweep(&a),
    }
}
