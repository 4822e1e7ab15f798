//! `mauc` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 unreadable or invalid
//! input, 3 shape mismatch, 4 training divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mauc::trainer::Batch;
use mauc::SurrogateSpec;

#[derive(Parser, Debug)]
#[command(
    name = "mauc",
    version,
    about = "Multiclass AUC evaluation, pairwise-risk kernels and training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score a dataset with a saved model and report multiclass AUC metrics.
    Eval(EvalArgs),
    /// Check the fast risk kernels against the brute-force oracle.
    Verify(VerifyArgs),
    /// Time the naive and fast risk evaluators on synthetic data.
    Bench(BenchArgs),
    /// Train a linear softmax model on a pairwise AUC surrogate risk.
    Train(TrainArgs),
    /// Generate a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Zero-based column holding the label (CSV only).
    #[arg(long, default_value_t = 0)]
    pub label_col: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file written by `mauc train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Number of rarest class pairs to report.
    #[arg(long, default_value_t = 5)]
    pub pairs: usize,
    /// Print a JSON report instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Surrogate loss, e.g. `exp:alpha=1` or `bernstein:base=logit,K=12`.
    #[arg(long)]
    pub loss: SurrogateSpec,
    /// Number of random instances.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Largest instance size.
    #[arg(long, default_value_t = 512)]
    pub max_n: usize,
    /// Trial `t` uses instance seed `seed + t`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiply every fast-kernel loss by `1 + PERTURB` (harness self-test).
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    /// Print a JSON report instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Surrogate loss.
    #[arg(long, default_value = "exp:alpha=1")]
    pub loss: SurrogateSpec,
    /// Ascending sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = mauc::bench::DEFAULT_SIZES)]
    pub sizes: Vec<usize>,
    /// Number of classes (defaults to the length of --rho).
    #[arg(long)]
    pub nc: Option<usize>,
    /// Feature dimension.
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    /// Class proportions, comma separated (uniform when only --nc is given).
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    /// Timed runs per measurement.
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Time the gradient together with the loss.
    #[arg(long)]
    pub grad: bool,
    /// Output file; JSON when it ends in `.json`, CSV otherwise. CSV goes to
    /// stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Softmax cross-entropy.
    Ce,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Surrogate loss.
    #[arg(long, default_value = "exp:alpha=1")]
    pub loss: SurrogateSpec,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Weight decay on W.
    #[arg(long, default_value_t = 1e-4)]
    pub wd: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// `full` or a mini-batch size.
    #[arg(long, default_value = "full")]
    pub batch: Batch,
    /// Learning-rate multiplier applied after every epoch.
    #[arg(long, default_value_t = 1.0)]
    pub lr_decay: f64,
    /// Epochs between validation evaluations.
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV output file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Train a baseline instead of the pairwise risk (--loss is ignored).
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Print a JSON summary instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Features uniform on [0, 1].
    Uniform,
    /// One isotropic Gaussian per class.
    Blobs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    /// Feature dimension.
    #[arg(long)]
    pub d: usize,
    /// Class proportions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    /// Distance scale between class means (blobs only).
    #[arg(long, default_value_t = 3.0)]
    pub sep: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Eval(a) => commands::eval(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Train(a) => commands::train(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
