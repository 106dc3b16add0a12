//! Command-line flags. Every default names its source: "experiment setting" for
//! values taken from the reference experiments, "module default" otherwise.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pg-limits",
    version,
    about = "Exact LQR policy gradients, two-point lower bounds on gradient estimation, and estimator experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact policy gradient, cost, value matrix and Gramian at a gain.
    Gradient(GradientArgs),
    /// Evaluate a lower-bound certificate.
    Certificate {
        #[command(subcommand)]
        mode: CertificateMode,
    },
    /// Spread of the plug-in and zeroth-order gradient estimators across b.
    Figure1(Figure1Args),
    /// Certificates over a parameter grid, one CSV row per grid point.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

/// Integer flag that also accepts scientific notation such as `1e6`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9.007_199_254_740_992e15 {
        Ok(v as usize)
    } else {
        Err(format!("'{s}' is not a nonnegative integer"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScalarSystemArgs {
    /// State coefficient a (module default)
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Input coefficient b (module default)
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub b: f64,
    /// State cost q (module default)
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Input cost r (module default)
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Process noise variance (module default)
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
}

#[derive(Debug, Args)]
pub struct GradientArgs {
    /// System file `{schema_version, A, B, SigmaW, Q, R}`; overrides the scalar flags
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Gain matrix file `[[...]]` (d_u x d_x)
    #[arg(long, conflicts_with = "k")]
    pub gain: Option<PathBuf>,
    /// Scalar gain, or `optimal` [module default: optimal]
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<String>,
    #[command(flatten)]
    pub scalar: ScalarSystemArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Number of trajectories N [module default: 1]
    #[arg(long = "N", value_parser = parse_count)]
    pub n: Option<usize>,
    /// Trajectory length T [module default: 10000]
    #[arg(long = "T", value_parser = parse_count)]
    pub t: Option<usize>,
    /// Total samples NT as a single trajectory (N = 1, T = NT)
    #[arg(long = "NT", visible_alias = "budget", value_parser = parse_count, conflicts_with_all = ["n", "t"])]
    pub nt: Option<usize>,
    /// Average input energy budget beta (module default)
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output format (module default)
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SystemCertArgs {
    /// System file (theorem2 also needs C and SigmaV)
    #[arg(long)]
    pub system: PathBuf,
    /// Perturbation file `[[...]]` (d_x x d_u). Without it a unit direction
    /// maximizing the gradient gap is used.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    /// Scale applied to the default direction [module default: 1/sqrt(beta N T)]
    #[arg(long)]
    pub delta_scale: Option<f64>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Subcommand)]
pub enum CertificateMode {
    /// Two-point bound for a system against its closed-loop-preserving perturbation.
    Theorem1(SystemCertArgs),
    /// Nullspace perturbation scaled to 1/sqrt(beta N T).
    Corollary1(SystemCertArgs),
    /// Scalar system with the closed-form perturbation size.
    Scalar {
        #[command(flatten)]
        system: ScalarSystemArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Output-feedback bound on the innovation-driven filter reduction.
    Theorem2(SystemCertArgs),
    /// Almost scalar output-feedback system.
    ScalarPo(ScalarPoArgs),
    /// Integrator chain with the exponentially growing bound.
    Curse(CurseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScalarPoArgs {
    /// State coefficient a (module default)
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub a: f64,
    /// Input coefficient b [module default: 1]
    #[arg(long, allow_negative_numbers = true, conflicts_with = "m")]
    pub b: Option<f64>,
    /// Output coefficient c [module default: 1]
    #[arg(long, allow_negative_numbers = true, conflicts_with = "m")]
    pub c: Option<f64>,
    /// Markov parameter m = cb; sets b = sqrt(m) s and c = sqrt(m) / s
    #[arg(long)]
    pub m: Option<f64>,
    /// Representation scale s used with --m (module default)
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CurseArgs {
    /// State dimension (module default)
    #[arg(long, default_value_t = 6)]
    pub dx: usize,
    /// Chain diagonal rho (module default)
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
#[command(after_help = FIGURE1_DEFAULTS)]
pub struct Figure1Args {
    /// JSON config overriding any subset of the defaults listed below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV output path (module default)
    #[arg(long, default_value = "figure1.csv")]
    pub output: PathBuf,
    /// Also write an SVG plot to this path
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// RNG seed, overrides the config [module default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated estimators: plugin, zeroth [module default: plugin,zeroth]
    #[arg(long)]
    pub methods: Option<String>,
    /// Worker threads, 0 for one per core (module default)
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub const FIGURE1_DEFAULTS: &str = "\
Config defaults (config key = value, source):
  a = 1                          experiment setting
  noise_std = 1                  experiment setting
  horizon = 100                  experiment setting
  plugin_trajectories = 100      experiment setting
  zeroth_order_rollouts = 10000  experiment setting
  zeroth_order_batch = 100       experiment setting
  b_grid = [0.05, 0.1, 0.25, 0.5, 1.0]  module default
  radius = 0.05                  module default
  beta = 1                       module default
  q = 1, r = 1                   module default
  b_ref = 1                      module default (evaluation gain is the optimal gain of (a, b_ref))
  seed = 0                       module default
  methods = [plugin_ls, zeroth_order]  module default";

#[derive(Debug, Clone, Args)]
pub struct SweepOutput {
    /// Write the CSV to this file instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// Scalar certificate over b.
    BSweep {
        /// State coefficient a (module default)
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        /// Comma-separated b values [module default: 1,0.3162...,...,0.001 (7 log-spaced)]
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: SweepOutput,
    },
    /// Almost scalar output-feedback certificate over the Markov parameter m.
    Markov {
        /// State coefficient a (module default)
        #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
        a: f64,
        /// Representation scale s (module default)
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        /// Comma-separated m values [module default: 1,0.3162...,...,0.001 (7 log-spaced)]
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: SweepOutput,
    },
    /// Integrator-chain certificate over the state dimension.
    Dimension {
        /// Chain diagonal rho (module default)
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// Comma-separated state dimensions [module default: 4,5,6,7,8]
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: SweepOutput,
    },
}
