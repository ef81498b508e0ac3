//! Flag definitions. Everything tunable is optional here; defaults are
//! resolved in [`crate::config`] so that an optional TOML config file can
//! sit between the flags and the built-in defaults (flags win).

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AAFIB_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "aafib",
    version,
    about = "Offline POMDP solver: FIB value iteration with safeguarded Anderson acceleration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve a problem and write the policy plus a per-iteration trace.
    Solve(SolveArgs),
    /// Evaluate a stored policy by Monte Carlo rollouts.
    Eval(EvalArgs),
    /// Sweep solver settings over repeated seeded runs into a summary CSV.
    Bench(BenchArgs),
    /// Generate a grid-navigation problem file.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Fib,
    AaFib,
    AaFibSim,
    Qmdp,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Fib => "fib",
            SolverKind::AaFib => "aa-fib",
            SolverKind::AaFibSim => "aa-fib-sim",
            SolverKind::Qmdp => "qmdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResampleArg {
    Fresh,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BeliefArg {
    Both,
    Fixed,
    Random,
}

/// Solver knobs shared by `solve` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct SolverFlags {
    /// Residual sup-norm stopping tolerance [default: 1e-6].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap [default: 100000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Anderson regularization scale eta [default: 1e-3].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Safeguard scale D [default: 1e6].
    #[arg(long)]
    pub safeguard_d: Option<f64>,
    /// Safeguard decay exponent phi [default: 1e-6].
    #[arg(long)]
    pub safeguard_phi: Option<f64>,
    /// Safeguard check interval N_s [default: 5].
    #[arg(long)]
    pub safeguard_ns: Option<usize>,
    /// Batch resampling policy for the simulation solver [default: fresh].
    #[arg(long, value_enum)]
    pub resample: Option<ResampleArg>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Problem source: `tiger`, `grid-nav:W,H,SLIP,NOISE,SEED`, or a
    /// `.pomdp` file path.
    #[arg(long)]
    pub problem: Option<String>,
    /// Solver to run [default: fib].
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// RNG seed for the initial alpha (and sampling) [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Anderson memory cap M_max [default: 4].
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Generative batch size |J| for the simulation solver [default: 20].
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[command(flatten)]
    pub solver_flags: SolverFlags,
    /// Output directory for policy.json and trace.csv
    /// [default: $AAFIB_OUT_DIR or `.`].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Problem source (same forms as `solve`).
    #[arg(long)]
    pub problem: Option<String>,
    /// Policy file written by `solve`.
    #[arg(long)]
    pub policy: PathBuf,
    /// Episodes per mode [default: 100].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Maximum trajectory length [default: 100].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Evaluation seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial-belief mode(s) to evaluate [default: both].
    #[arg(long, value_enum)]
    pub belief: Option<BeliefArg>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Problem source (same forms as `solve`).
    #[arg(long)]
    pub problem: Option<String>,
    /// Solver under test [default: aa-fib]. A plain FIB baseline row is
    /// always included.
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Memory sizes to sweep [default: 4,8,12,16].
    #[arg(long, value_delimiter = ',')]
    pub m_max: Option<Vec<usize>>,
    /// Batch sizes to sweep for the simulation solver [default: 20].
    #[arg(long, value_delimiter = ',')]
    pub sample_size: Option<Vec<usize>>,
    /// Number of repeated runs with distinct seeds per cell [default: 100].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed of the run sequence [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episodes per evaluation [default: 100].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Maximum trajectory length [default: 100].
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub solver_flags: SolverFlags,
    /// Summary CSV path [default: $AAFIB_OUT_DIR/bench.csv or ./bench.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Probability a move fails [default: 0.1].
    #[arg(long)]
    pub slip: Option<f64>,
    /// Probability the sensor reports `undetermined` [default: 0.1].
    #[arg(long)]
    pub obs_noise: Option<f64>,
    /// Layout seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output `.pomdp` path [default: $AAFIB_OUT_DIR/grid-nav.pomdp].
    #[arg(long)]
    pub out: Option<PathBuf>,
}
