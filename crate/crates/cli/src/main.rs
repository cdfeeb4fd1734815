//! `sdym`: solve, scan, map and audit the radial self-dual solutions.
//!
//! Exit status: 0 success, 1 usage or I/O error, 2 divergent solution,
//! 3 imaginary `alpha`, 4 failed property or unreliable series.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "sdym", version, about = "Radial self-dual Yang-Mills solutions on Euclidean Schwarzschild space")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Integrate one solution and report its action and charges.
    Solve,
    /// Classify and measure a range of kappa values.
    Scan,
    /// Compare the compactified series with the horizon series and the integrator.
    Map,
    /// Run the property suite.
    Check,
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let command = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::Scan => Command::Scan,
        Sub::Map => Command::Map,
        Sub::Check => Command::Check,
    };
    let cfg = RunConfig::resolve(command, &cli.flags)?;
    match command {
        Command::Solve => commands::solve(&cfg),
        Command::Scan => commands::scan(&cfg),
        Command::Map => commands::map(&cfg),
        Command::Check => commands::check(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
