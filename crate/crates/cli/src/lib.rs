//! Command-line workflow: fit, identify, irf, bootstrap-ci, simulate, coverage, diagnose.

pub mod config;
pub mod io;

pub mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use spvar_core::error::SpvarError;

pub use commands::execute;
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<SpvarError> for CliError {
    fn from(e: SpvarError) -> Self {
        let msg = e.to_string();
        if e.is_numerical() {
            return CliError::Numerical(msg);
        }
        match e {
            SpvarError::InvalidSpec(_) | SpvarError::Precondition(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Restricted least-squares fit; writes params.json.
    Fit,
    /// Structural impact matrices; writes h0.json.
    Identify,
    /// Structural impulse responses; writes irf.csv.
    Irf,
    /// Bootstrap confidence bands; writes bands.csv.
    BootstrapCi,
    /// Synthetic data from the configured DGP; writes simulated.csv.
    Simulate,
    /// Monte Carlo coverage of bootstrap bands; writes coverage.csv.
    Coverage,
    /// Autocorrelations, spectra and whiteness checks.
    Diagnose,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Identify => "identify",
            Command::Irf => "irf",
            Command::BootstrapCi => "bootstrap-ci",
            Command::Simulate => "simulate",
            Command::Coverage => "coverage",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spvar", version, about = "Structural periodic vector autoregressions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Block length.
    #[arg(long = "b", global = true)]
    pub block_len: Option<usize>,
    /// Number of bootstrap replicates.
    #[arg(long = "L", global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to SPVAR_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Failures print one line `error[category]: detail` to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[config]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}
