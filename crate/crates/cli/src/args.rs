use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "eegvit",
    version,
    about = "Gaze-position regression from EEG: data, training, evaluation, latency and ablations",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numeric failure.\n\
                  Set EEGVIT_DETERMINISTIC=1 to force sequential kernels."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset, or convert an exported one
    GenData(GenDataArgs),
    /// Train over one or more seeds and write a run report
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset
    Eval(EvalArgs),
    /// Time inference across patch-projection geometries
    Bench(BenchArgs),
    /// Train every ablation variant over every seed, with caching
    Ablate(AblateArgs),
    /// Compare analytic gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// List the tensors of a checkpoint or summarize a dataset
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Config file; its [data] table supplies defaults
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Number of subjects
    #[arg(long, value_name = "N")]
    pub subjects: Option<usize>,
    /// Trials per subject
    #[arg(long, value_name = "N")]
    pub trials: Option<usize>,
    /// EEG channels per trial
    #[arg(long, value_name = "N")]
    pub channels: Option<usize>,
    /// Samples per trial
    #[arg(long, value_name = "N")]
    pub timepoints: Option<usize>,
    /// Scale of the added white and 1/f background noise
    #[arg(long, value_name = "STD")]
    pub noise: Option<f64>,
    /// Per-subject gain jitter
    #[arg(long, value_name = "STD")]
    pub gain_jitter: Option<f64>,
    /// Generator seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Convert a signal matrix [N, 129, T] instead of generating data
    #[arg(long, value_name = "PATH", requires = "import_labels")]
    pub import_signals: Option<PathBuf>,
    /// Label matrix [N, 3] of (subject, x_mm, y_mm) for --import-signals
    #[arg(long, value_name = "PATH", requires = "import_signals")]
    pub import_labels: Option<PathBuf>,
    /// Output dataset file
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Model and optimizer flags shared by `train` and `ablate`.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// Config file with optional preset, [model] and [train] tables
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Model preset: full, desk or bench [default: desk]
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Seeds as a list or inclusive range, e.g. 3, 1,4,9 or 1..5
    #[arg(long, value_name = "SEEDS")]
    pub seed: Option<String>,
    /// Maximum number of epochs
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Mini-batch size
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    /// Epochs without improvement before stopping
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Fraction of subjects used for training
    #[arg(long, value_name = "F")]
    pub train_fraction: Option<f64>,
    /// Use one subject split for every seed
    #[arg(long, value_name = "N")]
    pub split_seed: Option<u64>,
    /// Initialize the encoder from this checkpoint
    #[arg(long, value_name = "PATH")]
    pub warm_start: Option<PathBuf>,
    /// Patch projection as KERNEL:STRIDE
    #[arg(long, value_name = "K:S")]
    pub patch: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Dataset file
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Apply one ablation variant to the model
    #[arg(long, value_name = "NAME")]
    pub variant: Option<String>,
    /// Save each seed's best weights as DIR/seed-<n>.ntar
    #[arg(long, value_name = "DIR")]
    pub save_dir: Option<PathBuf>,
    /// Do not print per-epoch progress
    #[arg(long)]
    pub quiet: bool,
    /// Run report file
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by train --save-dir
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Dataset file
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Evaluate only the validation subjects of this split
    #[arg(long, value_name = "N")]
    pub split_seed: Option<u64>,
    /// Training fraction of the split
    #[arg(long, value_name = "F", default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Samples per forward pass
    #[arg(long, value_name = "N", default_value_t = 64)]
    pub batch_size: usize,
    /// Evaluation report file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Config file with optional preset and [model] table
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Model preset: full, desk or bench [default: bench]
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Geometries as K:S,K:S,... or "default" (1:1,2:2,4:4,14:14)
    #[arg(long, value_name = "LIST", default_value = "default")]
    pub sweep: String,
    /// Samples per timed forward pass
    #[arg(long, value_name = "N", default_value_t = 8)]
    pub batch: usize,
    /// Timed repetitions per geometry (at least 10)
    #[arg(long, value_name = "N", default_value_t = 30)]
    pub reps: usize,
    /// Untimed warmup passes per geometry (at least 3)
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub warmup: usize,
    /// Trained weights for one geometry, as K:S=PATH; repeatable
    #[arg(long, value_name = "K:S=PATH", requires = "data")]
    pub checkpoint: Vec<String>,
    /// Dataset for the validation RMSE of --checkpoint models
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Sweep report file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Dataset file
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Comma-separated variant names [default: all eight]
    #[arg(long, value_name = "LIST")]
    pub variants: Option<String>,
    /// Cells trained at once
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
    /// Cache directory for finished cells
    #[arg(long, value_name = "DIR", default_value = "ablation-cache")]
    pub cache: PathBuf,
    /// Retrain every cell and write nothing to the cache
    #[arg(long)]
    pub no_cache: bool,
    /// Table report file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// ops: per-operation cases only; desk: also the desk-scale model
    #[arg(long, value_name = "SCALE", default_value = "desk")]
    pub scale: String,
    /// Sampled coordinates per parameter tensor in the model check
    #[arg(long, value_name = "N", default_value_t = 8)]
    pub coords: usize,
    /// Seed for weights, inputs and sampled coordinates
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub seed: u64,
    /// Result file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["model", "data"])))]
pub struct InspectArgs {
    /// Checkpoint file
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Dataset file
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}
