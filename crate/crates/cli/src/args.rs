use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flqr::inference::DEFAULT_PATHS;
use flqr::spectrum::DEFAULT_N_EIG;
use flqr::tuning::LambdaRule;

/// Version string; the format revision bumps whenever an output layout changes.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format rev 1)");
pub const FORMAT_REV: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "flqr", version = VERSION, about = "Smoothed functional linear quantile regression")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for folds, quantile levels, simulated paths and replicates [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file whose keys mirror the long flags; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the slope function at one level or a grid of levels
    Fit(FitArgs),
    /// Conditional quantile predictions for new curves
    Predict(PredictArgs),
    /// Pointwise confidence intervals for the slope function
    Ci(CiArgs),
    /// Simultaneous confidence band for the slope function
    Scb(ScbArgs),
    /// Confidence intervals for conditional quantiles at new curves
    QuantileCi(QuantileCiArgs),
    /// Make a quantile path nondecreasing in the level
    Monotonize(MonotonizeArgs),
    /// Monte Carlo experiments on the simulation design
    Simulate(SimulateArgs),
    /// Time the pipeline stages on simulated data
    Bench(BenchArgs),
}

impl Command {
    pub const NAMES: [&'static str; 8] = ["fit", "predict", "ci", "scb", "quantile-ci", "monotonize", "simulate", "bench"];
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleArg {
    /// Largest λ within one standard error of the smallest CV risk
    OneSe,
    /// Smallest CV risk
    MinRisk,
}

impl From<RuleArg> for LambdaRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::OneSe => LambdaRule::OneStandardError,
            RuleArg::MinRisk => LambdaRule::MinRisk,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignArg {
    Normal,
    T3,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentArg {
    /// Integrated squared error of the slope estimate
    Mise,
    /// Coverage of pointwise intervals, quantile intervals and bands
    Coverage,
    /// One simulated sample, written with --curves-out and --y-out
    Sample,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Rkhs,
    Fpca,
}

/// Smoothing and penalty controls shared by fitting commands.
#[derive(Args, Debug, Clone)]
pub struct TuningArgs {
    /// Smoothing bandwidth [default: rule of thumb]
    #[arg(long)]
    pub h: Option<f64>,

    /// Penalty λ [default: cross-validated]
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Comma-separated λ grid for cross-validation [default: 13 points, 1e-9 to 1e-3]
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,

    /// How the λ grid is reduced to one value
    #[arg(long, value_enum, default_value_t = RuleArg::OneSe)]
    pub lambda_rule: RuleArg,

    /// Cross-validation folds
    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    /// Gradient-norm tolerance of the final fit
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Iteration cap of every fit
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Curves CSV: grid on the first row, one curve per further row
    #[arg(long)]
    pub curves: PathBuf,

    /// Responses CSV, one value per row in curve order
    #[arg(long)]
    pub y: PathBuf,

    /// Quantile level
    #[arg(long, conflicts_with = "taus", required_unless_present = "taus")]
    pub tau: Option<f64>,

    /// Comma-separated, strictly increasing quantile levels
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,

    /// Cross-validate λ once at the level closest to 0.5 and reuse it
    #[arg(long)]
    pub shared_lambda: bool,

    /// Seed of the cross-validation folds
    #[arg(long)]
    pub seed: u64,

    #[command(flatten)]
    pub tuning: TuningArgs,

    /// Fit artifact (JSON) [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also write the slope estimate as CSV (single level only)
    #[arg(long)]
    pub beta_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Fit artifact written by `fit`
    #[arg(long)]
    pub fit: PathBuf,

    /// New curves CSV on the fit's grid
    #[arg(long)]
    pub curves: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CiArgs {
    #[arg(long)]
    pub fit: PathBuf,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    /// Comma-separated points; [default: every grid point]
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,

    /// Eigenfunctions kept in the variance expansion
    #[arg(long, default_value_t = DEFAULT_N_EIG)]
    pub n_eig: usize,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScbArgs {
    #[arg(long)]
    pub fit: PathBuf,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    /// Simulated Gaussian paths calibrating the band
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    pub paths: usize,

    #[arg(long)]
    pub seed: u64,

    #[arg(long, default_value_t = DEFAULT_N_EIG)]
    pub n_eig: usize,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QuantileCiArgs {
    #[arg(long)]
    pub fit: PathBuf,

    /// Curves CSV with the new covariates, on the fit's grid
    #[arg(long)]
    pub x0: PathBuf,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    #[arg(long, default_value_t = DEFAULT_N_EIG)]
    pub n_eig: usize,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MonotonizeArgs {
    /// CSV with columns `tau,value`
    #[arg(long, conflicts_with_all = ["fit", "x0"], required_unless_present = "fit")]
    pub path: Option<PathBuf>,

    /// Multi-level fit artifact written by `fit --taus`
    #[arg(long, requires = "x0")]
    pub fit: Option<PathBuf>,

    /// Curves CSV; one path per curve
    #[arg(long)]
    pub x0: Option<PathBuf>,

    /// Weight of the rearrangement; the isotonic projection gets the rest
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ExperimentArg::Mise)]
    pub experiment: ExperimentArg,

    /// Error distribution
    #[arg(long, value_enum, default_value_t = DesignArg::Normal)]
    pub design: DesignArg,

    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,

    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long, default_value_t = 200)]
    pub reps: usize,

    /// Master seed; replicate r uses seed + r
    #[arg(long)]
    pub seed: u64,

    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub taus: Vec<f64>,

    /// Methods compared by the MISE experiment
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rkhs,fpca")]
    pub methods: Vec<MethodArg>,

    /// Points checked by pointwise intervals (coverage experiment)
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    pub t_points: Vec<f64>,

    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    /// Also check conditional-quantile intervals at a fixed new curve
    #[arg(long)]
    pub quantile_ci: bool,

    /// Also check simultaneous bands, with this many paths
    #[arg(long)]
    pub scb_paths: Option<usize>,

    #[arg(long, default_value_t = DEFAULT_N_EIG)]
    pub n_eig: usize,

    /// Cross-validate λ once per replicate and share it across levels
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    pub shared_lambda: bool,

    #[command(flatten)]
    pub tuning: TuningArgs,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Report in the chosen format [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Curves CSV of the `sample` experiment
    #[arg(long)]
    pub curves_out: Option<PathBuf>,

    /// Responses of the `sample` experiment
    #[arg(long)]
    pub y_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    #[arg(long, default_value_t = 5)]
    pub reps: usize,

    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,

    #[arg(long)]
    pub seed: u64,

    /// Fixed λ; cross-validation is timed when absent
    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long)]
    pub out: Option<PathBuf>,
}
