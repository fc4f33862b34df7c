use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hgnn", version, about = "Metapath-based heterogeneous graph node classification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Floating-point precision for training; overrides the config file.
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FusionArg {
    Transformer,
    WeightedSum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureFormatArg {
    Tsv,
    Bin,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-signal synthetic dataset directory.
    Synth(SynthArgs),
    /// Compute every semantic matrix once and store them.
    Precompute(PrecomputeArgs),
    /// Train on precomputed matrices; writes a checkpoint and a report.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Time precompute and training epochs across an edge-density sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator settings as JSON (defaults to the built-in ACM-like graph).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Multiplier on every relation's expected degree.
    #[arg(long)]
    pub edge_scale: Option<f64>,
    /// Number of target nodes.
    #[arg(long)]
    pub targets: Option<usize>,
    #[arg(long, value_enum, default_value = "tsv")]
    pub feature_format: FeatureFormatArg,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Maximum hop of feature metapaths.
    #[arg(long, default_value_t = 2)]
    pub max_hop: usize,
    /// Maximum hop of label metapaths (below 2 disables label propagation).
    #[arg(long, default_value_t = 2)]
    pub label_max_hop: usize,
    /// Output directory for the manifest and matrices.
    #[arg(long)]
    pub out: PathBuf,
    /// Compute every path from scratch instead of reusing shared suffixes/prefixes.
    #[arg(long)]
    pub no_memo: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `precompute`.
    #[arg(long)]
    pub precomputed: PathBuf,
    /// Flat `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Where to write the checkpoint (default: next to the report, `model.ckpt`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub max_hop_features: Option<usize>,
    #[arg(long)]
    pub max_hop_labels: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Any other config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub precomputed: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Also write the metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Edge-density sweep, e.g. `edges=1x,2x,4x`.
    #[arg(long, default_value = "edges=1x,2x,4x")]
    pub sweep: String,
    /// Timed epochs per point (after warmup).
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Precompute repetitions per point; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub precompute_repeats: usize,
    #[arg(long, default_value_t = 2)]
    pub max_hop: usize,
    #[arg(long, default_value_t = 2)]
    pub label_max_hop: usize,
    /// Number of target nodes.
    #[arg(long)]
    pub targets: Option<usize>,
    /// Skip the metapath-count sweep.
    #[arg(long)]
    pub no_k_sweep: bool,
    #[arg(long, default_value = "bench.json")]
    pub out: PathBuf,
}
