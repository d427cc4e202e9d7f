use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;

/// Vecchia-approximated Gaussian-process fitting with EM refinement for
/// noisy data. Every command writes a `*.manifest.json` next to its output.
#[derive(Parser, Debug, Serialize)]
#[command(name = "vecchia-em", version, about)]
pub struct Cli {
    /// Worker threads (0 = all cores). Results are reproducible at any fixed
    /// setting.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Allow dense computations beyond the size guard.
    #[arg(long, global = true)]
    pub force_dense: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Simulate datasets from a GP with additive noise.
    Simulate(SimulateArgs),
    /// Fit the naive Vecchia likelihood (noise folded into every block).
    FitVecchia(FitVecchiaArgs),
    /// Fit with the EM algorithm, starting from a naive Vecchia fit by default.
    FitEm(FitEmArgs),
    /// Exact negative log-likelihood of a dataset (dense; small n only).
    ExactNll(ExactNllArgs),
    /// Nearest-neighbour kriging of the latent process at target points.
    Predict(PredictArgs),
    /// Re-run one M-step with nested probe ensembles of growing size.
    DiagnoseSaa(DiagnoseSaaArgs),
    /// Replicated simulate / naive fit / EM fit / exact scoring study.
    Study(StudyArgs),
    /// Re-execute the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// `(sigma2,rho,nu,eta2)` or a parameter file.
    #[arg(long, default_value = "(10,0.025,2.25,0.25)")]
    pub params: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Spatial dimension (unit hypercube domain).
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Also store the latent field as column `z`.
    #[arg(long)]
    pub latent: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct PlanArgs {
    /// maximin, coordinateN or identity.
    #[arg(long, default_value = "maximin")]
    pub ordering: String,
    /// Nearest earlier neighbours per point.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Use blocks of this many points (with `--chunk-cond` conditioning points).
    #[arg(long)]
    pub chunk: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub chunk_cond: usize,
    /// Condition every point on all earlier ones (exact; small n).
    #[arg(long)]
    pub full: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum MethodArg {
    Newton,
    Bfgs,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct OptimArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Newton)]
    pub method: MethodArg,
    /// Central finite differences instead of dual numbers.
    #[arg(long)]
    pub fd: bool,
    #[arg(long, default_value_t = 500)]
    pub max_evals: usize,
    /// Keep these parameters fixed at their initial values (comma-separated names).
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitVecchiaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Initial parameters: `(sigma2,rho,nu,eta2)` or a parameter file.
    #[arg(long)]
    pub init: Option<String>,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Output parameter file; the optimizer trace goes to `<out>.trace.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct EmArgs {
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 72)]
    pub saa_count: usize,
    #[arg(long, default_value_t = 0)]
    pub saa_seed: u64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub symmetrize: OnOff,
    /// Exact (dense) trace instead of probes; small n only.
    #[arg(long)]
    pub exact_trace: bool,
    /// dense, sparse or cg.
    #[arg(long, default_value = "sparse")]
    pub backend: String,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct FitEmArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Initial parameters; by default a naive Vecchia fit is run first.
    #[arg(long)]
    pub init: Option<String>,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub em: EmArgs,
    /// Output parameter file; history goes to `<out>.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ExactNllArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "diff", conflicts_with = "diff")]
    pub params: Option<String>,
    /// Report NLL(A) - NLL(B).
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub diff: Option<Vec<String>>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub params: String,
    /// CSV of target points with header `x1,...,xd`.
    #[arg(long, conflicts_with = "at")]
    pub targets: Option<PathBuf>,
    /// A target point, e.g. `0.5,0.5` (repeatable).
    #[arg(long)]
    pub at: Vec<String>,
    /// Neighbours used per prediction (default min(500, n)).
    #[arg(long)]
    pub k: Option<usize>,
    /// Second parameter set; adds `mean_compare` and `abs_diff` columns.
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseSaaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// The E-step point theta0.
    #[arg(long)]
    pub params: String,
    #[arg(long, value_delimiter = ',', default_value = "5,25,50,75,100,125")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub saa_seed: u64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub symmetrize: OnOff,
    #[arg(long, default_value = "sparse")]
    pub backend: String,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    #[arg(long, default_value = "(10,0.025,2.25,0.25)")]
    pub params: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 72)]
    pub saa_count: usize,
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
    /// Neighbours for the center-point prediction.
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}
