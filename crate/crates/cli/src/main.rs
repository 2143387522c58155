//! `rgq`: simulate panels, estimate quantile models, forecast, backtest and run
//! accuracy experiments from an INI configuration file.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 estimation
//! failure, 3 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rgq_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Estimation(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match category(&e) {
            1 => CliError::Validation(msg),
            2 => CliError::Estimation(msg),
            _ => CliError::Io(msg),
        }
    }
}

fn category(e: &CoreError) -> u8 {
    match e {
        CoreError::Parse { .. }
        | CoreError::Ordering { .. }
        | CoreError::Config(_)
        | CoreError::Domain(_)
        | CoreError::InsufficientData(_)
        | CoreError::Alignment(_) => 1,
        CoreError::Singular(_) | CoreError::Optimization(_) | CoreError::Numeric(_) | CoreError::Internal(_) => 2,
        CoreError::AtDay { source, .. } => category(source),
        CoreError::Io(_) => 3,
    }
}

#[derive(Debug, Parser)]
#[command(name = "rgq", version, about = "Realized-GARCH quantile regression for value at risk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// INI configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `[backtest] refit_every`.
    #[arg(long, global = true)]
    pub refit_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Simulate an intraday panel and its latent volatility path.
    Simulate,
    /// Fit every configured model and quantile level on the full sample.
    Estimate,
    /// One-day-ahead quantile forecasts from full-sample fits.
    Forecast,
    /// Rolling-window forecasts with coverage tests and relative losses.
    Backtest,
    /// Monte Carlo accuracy experiment over an `(n, m)` grid.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Forecast => "forecast",
            Command::Backtest => "backtest",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rgq {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
