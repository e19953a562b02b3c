//! `gaplm` command-line tool.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaplm::GaplmError;
use serde::Serialize;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "gaplm", version, about = "Generalized additive partial linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the unpenalized model.
    Fit(Config),
    /// Select linear covariates with SCAD, LASSO or best-subset BIC.
    Select(Config),
    /// Monte Carlo study of the selectors on a simulated scenario.
    Simulate(Config),
    /// Choose interior-knot counts by cross-validation (with --data) or run
    /// the prediction-error experiment on a scenario.
    Knots(Config),
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: "usage",
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: "io",
            message: message.into(),
            exit_code: EXIT_DATA,
        }
    }
}

impl From<GaplmError> for CliError {
    fn from(e: GaplmError) -> Self {
        let (kind, exit_code) = match &e {
            GaplmError::Config(_) | GaplmError::TooManySubsets { .. } => ("config", EXIT_USAGE),
            GaplmError::UnknownColumn { .. } => ("unknown-column", EXIT_DATA),
            GaplmError::NonNumeric { .. } => ("non-numeric", EXIT_DATA),
            GaplmError::NoRows => ("no-rows", EXIT_DATA),
            GaplmError::Io(_) | GaplmError::Csv(_) => ("io", EXIT_DATA),
            GaplmError::RankDeficient { .. } => ("rank-deficient", EXIT_DATA),
            _ => ("data", EXIT_DATA),
        };
        CliError {
            kind,
            message: e.to_string(),
            exit_code,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fit(c) => commands::run_fit(c),
        Command::Select(c) => commands::run_select(c),
        Command::Simulate(c) => commands::run_simulate(c),
        Command::Knots(c) => commands::run_knots(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let json = serde_json::json!({ "error": e });
            eprintln!("{json}");
            ExitCode::from(e.exit_code)
        }
    }
}
