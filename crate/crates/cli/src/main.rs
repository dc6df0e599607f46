//! `rdsens`: sensitivity estimates for reflected diffusions from the command line.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::{Parser, Subcommand};

use crate::commands::{EstimateArgs, SweepArgs, ValidateArgs};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rdsens", version, about = "IPA, LR and FD sensitivity estimates for reflected diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one Monte Carlo estimate and print a CSV or JSON report
    Estimate(EstimateArgs),
    /// Repeat an estimate over step sizes, horizons or finite-difference steps
    Sweep(SweepArgs),
    /// Run the invariant suites, or check a model file
    Validate(ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::Usage(e.render().to_string().trim().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Estimate(args) => commands::cmd_estimate(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Validate(args) => commands::cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
