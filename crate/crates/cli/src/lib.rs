//! The `label-audit` command line: one binary, one subcommand per pipeline
//! stage, files in the output directory as the hand-off between stages.

mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "label-audit",
    version,
    about = "Find and fix label errors with nearest-neighbour label agreement"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: config `out`, then $LABEL_AUDIT_OUT, then ./out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every stage of this run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for scoring and neighbour search.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Checkpoint directory [default: <out>/checkpoints].
    #[arg(long, global = true)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Gaussian-mixture dataset and split off auxiliary and test sets.
    Synth(SynthArgs),
    /// Corrupt labels and record which ones changed.
    Inject(InjectArgs),
    /// Train the classifier and write one checkpoint per epoch.
    Train(TrainArgs),
    /// Score every example with the selected detectors.
    Score(ScoreArgs),
    /// Order one method's scores from most to least suspicious.
    Rank(RankArgs),
    /// Detect and rectify (or remove) suspicious labels.
    Rectify(RectifyArgs),
    /// Detection curves and error reduction against the injected noise.
    Evaluate(EvaluateArgs),
    /// Compare same- and different-label residual kernels on a trained model.
    TheoryCheck(TheoryArgs),
    /// Assemble the full audit report with figures.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Bin,
    Csv,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub std: Option<f64>,
    /// Auxiliary set size `m`.
    #[arg(long)]
    pub aux_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = FileFormat::Bin)]
    pub format: FileFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Uniform,
    Ambiguity,
    Concentrated,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    /// Dataset to corrupt [default: <out>/train.bin].
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Ambiguity mapping as comma-separated targets, one per class.
    #[arg(long, value_delimiter = ',')]
    pub mapping: Option<Vec<usize>>,
    #[arg(long)]
    pub source: Option<usize>,
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adamw,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training set [default: <out>/noisy.bin].
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation set for checkpoint selection [default: <out>/aux.bin].
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
}

#[derive(Debug, Args)]
pub struct ModelSource {
    /// Score on the input features as given instead of penultimate features.
    #[arg(long)]
    pub raw_features: bool,
    /// Use this checkpoint instead of the best one in the checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Audited set [default: <out>/noisy.bin].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Auxiliary (trusted) set [default: <out>/aux.bin].
    #[arg(long)]
    pub aux: Option<PathBuf>,
    /// Comma-separated subset of sc, nm, ce, if, gd, gc, tracin, sim-cos, sim-dot.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Neighbours per query for sim-cos and sim-dot.
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub model: ModelSource,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Score tables [default: <out>/scores.csv].
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Method to rank [default: the first table].
    #[arg(long)]
    pub method: Option<String>,
    /// Keep only the top fraction of the ranking.
    #[arg(long)]
    pub top: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActionArg {
    Rectify,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Cos,
    Dot,
}

#[derive(Debug, Args)]
pub struct RectifyArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub aux: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub action: Option<ActionArg>,
    #[arg(long, value_enum, default_value_t = MeasureArg::Cos)]
    pub measure: MeasureArg,
    #[command(flatten)]
    pub model: ModelSource,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Noise report with the corrupted ids [default: <out>/noise.csv].
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Dataset before cleaning [default: <out>/noisy.bin if present].
    #[arg(long)]
    pub before: Option<PathBuf>,
    /// Dataset after cleaning [default: <out>/rectified.bin if present].
    #[arg(long)]
    pub after: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[command(flatten)]
    pub model: ModelSource,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub aux: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub rectified: Option<PathBuf>,
    /// Held-out test set for retraining [default: <out>/test.bin if present].
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Retrain on removed and rectified data for every configured seed.
    #[arg(long)]
    pub retrain: bool,
    #[command(flatten)]
    pub model: ModelSource,
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let first = e.to_string();
            let line = first
                .lines()
                .next()
                .unwrap_or("bad arguments")
                .trim_start_matches("error: ");
            return Err(CliError::argument(line.to_string()));
        }
    };
    if cli.global.threads == 0 {
        return Err(CliError::argument("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| CliError::argument(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}
