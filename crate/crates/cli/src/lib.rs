//! `sqznb` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<sqznb_core::Error> for CliError {
    fn from(e: sqznb_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sqznb",
    version,
    about = "Squeezed-light quantum noise budgets for interferometric detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate injected squeezing through loss and phase noise.
    Propagate(PropagateArgs),
    /// Infer the detection efficiency from injected and detected squeezing.
    Fit(FitArgs),
    /// Monte Carlo uncertainty of the detected squeezing.
    Uncertainty(UncertaintyArgs),
    /// Monte Carlo uncertainty of a loss chain's total efficiency.
    Chain(ChainArgs),
    /// Injected squeezing level that maximizes detected squeezing.
    Optimize(OptimizeArgs),
    /// Compose a strain noise budget with and without squeezing.
    Budget(BudgetArgs),
    /// Quantum noise projections for no, fixed-angle and
    /// frequency-dependent squeezing.
    Project(ProjectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Averaging {
    /// cos²θ / sin²θ of the RMS jitter
    Rms,
    /// exact Gaussian average, (1 ± e^{-2θ²})/2
    Gaussian,
}

impl From<Averaging> for sqznb_core::PhaseAveraging {
    fn from(a: Averaging) -> Self {
        match a {
            Averaging::Rms => sqznb_core::PhaseAveraging::RmsSubstitution,
            Averaging::Gaussian => sqznb_core::PhaseAveraging::Gaussian,
        }
    }
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// Squeezing leaving the OPO, dB
    #[arg(long, allow_negative_numbers = true)]
    pub inject_db: f64,
    /// Total detection efficiency (alternative to --loss)
    #[arg(long, conflicts_with = "loss", allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Loss element as label=efficiency; repeat for a chain
    #[arg(long, value_name = "LABEL=EFFICIENCY")]
    pub loss: Vec<String>,
    /// RMS phase noise, mrad
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phase_mrad: f64,
    #[arg(long, value_enum, default_value_t = Averaging::Rms)]
    pub phase_averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Injected squeezing, dB
    #[arg(long, allow_negative_numbers = true)]
    pub injected: f64,
    /// Detected squeezing, dB
    #[arg(long, allow_negative_numbers = true)]
    pub detected: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phase_mrad: f64,
    #[arg(long, value_enum, default_value_t = Averaging::Rms)]
    pub phase_averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[arg(long, default_value_t = 10.3)]
    pub inject_db: f64,
    #[arg(long, default_value_t = 0.2)]
    pub inject_sigma_db: f64,
    #[arg(long, default_value_t = 0.44)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.02)]
    pub eta_sigma: f64,
    #[arg(long, default_value_t = 37.0)]
    pub phase_mrad: f64,
    #[arg(long, default_value_t = 6.0)]
    pub phase_sigma_mrad: f64,
    #[arg(long, value_enum, default_value_t = Averaging::Rms)]
    pub phase_averaging: Averaging,
    #[arg(long, default_value_t = sqznb_core::estimate::DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = sqznb_core::estimate::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Element as label=efficiency:sigma; repeat for a chain. Defaults to
    /// the H1 mode-mismatch, OMC and Faraday losses.
    #[arg(long, value_name = "LABEL=EFF:SIGMA")]
    pub element: Vec<String>,
    #[arg(long, default_value_t = sqznb_core::estimate::DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = sqznb_core::estimate::DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub phase_mrad: f64,
    #[arg(long, value_enum, default_value_t = Averaging::Rms)]
    pub phase_averaging: Averaging,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Run configuration (JSON)
    pub config: PathBuf,
    /// Output path prefix
    #[arg(long)]
    pub out: PathBuf,
    /// Also write <prefix>.svg
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    None,
    Fixed,
    FdOptimal,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Fixed => "fixed",
            Mode::FdOptimal => "fd-optimal",
        }
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Run configuration (JSON)
    pub config: PathBuf,
    /// Squeezing modes to evaluate; repeatable. Defaults to all three.
    #[arg(long, value_enum)]
    pub mode: Vec<Mode>,
    /// Output path prefix
    #[arg(long)]
    pub out: PathBuf,
}

/// Caps rayon's worker count from `SQZNB_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SQZNB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!("SQZNB_THREADS must be a positive integer, got '{value}'"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Propagate(a) => commands::propagate(&a, &mut stdout),
        Command::Fit(a) => commands::fit(&a, &mut stdout),
        Command::Uncertainty(a) => commands::uncertainty(&a, &mut stdout),
        Command::Chain(a) => commands::chain(&a, &mut stdout),
        Command::Optimize(a) => commands::optimize(&a, &mut stdout),
        Command::Budget(a) => commands::budget(&a, &mut stdout),
        Command::Project(a) => commands::project(&a, &mut stdout),
    }
}
