//! Command-line surface. Every option is optional at the clap level; the
//! effective value is resolved as flag > config file > built-in default, so
//! a `key = value` config file can stand in for any flag.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "tokvar",
    version,
    about = "Simulate, measure, and predict run-to-run variation in token probabilities",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate multi-run traces from the synthetic projection model.
    Simulate(SimulateArgs),
    /// Align traces, compute variation statistics, and emit plot-ready CSVs.
    Analyze(AnalyzeArgs),
    /// Predict per-token variation from a single run plus a noise scale.
    Estimate(EstimateArgs),
    /// Compare predictions against an observed ensemble; gate on a budget.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FmtArg {
    Bf16,
    Fp16,
    Fp32,
    /// Exact accumulation: the order-invariant null model.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Order-dependent reduced-precision accumulation.
    Mechanistic,
    /// i.i.d. Gaussian logit noise on exact logits (requires --noise-s).
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Left-balanced pairwise tree over the permuted sequence.
    Tree,
    /// Left fold in permutation order.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Vocabulary size V.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Hidden dimension D of the projection.
    #[arg(long, short = 'D')]
    pub hidden_dim: Option<usize>,
    /// Number of runs N per prompt.
    #[arg(long, short = 'N')]
    pub runs: Option<usize>,
    /// Generation steps per prompt.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of prompts.
    #[arg(long)]
    pub prompts: Option<u32>,
    /// Arithmetic of the mechanistic mode.
    #[arg(long, value_enum)]
    pub fmt: Option<FmtArg>,
    /// Batch-size label B; runs draw accumulation orders from a pool of B.
    #[arg(long, short = 'B')]
    pub batch: Option<u32>,
    /// Softmax temperature T.
    #[arg(long, short = 'T')]
    pub temperature: Option<f64>,
    /// Master seed; everything is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight/context scale of the synthetic model.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Top-k slice recorded per step.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Operating mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Logit noise standard deviation (gaussian mode only).
    #[arg(long)]
    pub noise_s: Option<f64>,
    /// Reduction policy of the mechanistic mode.
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Fuse each multiply-add into a single rounding.
    #[arg(long)]
    pub fused: bool,
    /// Trace encoding.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output trace file.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = default).
    #[arg(long)]
    pub workers: Option<usize>,
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Input trace file.
    #[arg(long, short = 'i')]
    pub input: Option<PathBuf>,
    /// Trace encoding (inferred from the extension when omitted).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Directory for the emitted CSV tables.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Probability-profile bin width.
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Logit-profile bin width.
    #[arg(long)]
    pub logit_bin_width: Option<f64>,
    /// Include columns whose probabilities were imputed.
    #[arg(long)]
    pub include_imputed: bool,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Worker threads (0 = default).
    #[arg(long)]
    pub workers: Option<usize>,
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Input trace file (the single inference to estimate from).
    #[arg(long, short = 'i')]
    pub input: Option<PathBuf>,
    /// Trace encoding (inferred from the extension when omitted).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Run id to estimate from (default: the first run in the file).
    #[arg(long)]
    pub run: Option<String>,
    /// Logit-noise scale s.
    #[arg(long)]
    pub noise_s: Option<f64>,
    /// Trace file with >= 2 runs and logits to calibrate s from.
    #[arg(long)]
    pub calibrate_from: Option<PathBuf>,
    /// Number of runs the predicted range refers to.
    #[arg(long)]
    pub n_runs: Option<usize>,
    /// Regime thresholds as LOW,HIGH.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Output prediction CSV.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Prediction CSV produced by `estimate`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Trace file with the observed ensemble.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    /// Trace encoding of the observed file (inferred when omitted).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Mid-regime median relative sigma error budget; exceeding it exits 2.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Regime thresholds as LOW,HIGH.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
