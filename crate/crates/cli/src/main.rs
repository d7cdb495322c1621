use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "psh-lac", version, about = "Look-ahead commitment simulations with pumped-storage hydro")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated model variants.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    /// Number of price scenarios S.
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window length L in hours.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the price forecaster and write scenario files for every origin.
    Forecast {
        #[command(flatten)]
        common: Common,
    },
    /// Run the rolling simulation for the requested variants and report.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic system, market day, price history and config.
    GenInstance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sizes: commands::Sizes,
    },
    /// Rebuild the reports of a finished simulation run.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `simulate`.
        #[arg(long)]
        run: PathBuf,
    },
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Forecast { common } => commands::forecast(&common),
        Command::Simulate { common } => commands::simulate(&common),
        Command::GenInstance { common, sizes } => commands::gen_instance(&common, &sizes),
        Command::Report { common, run } => commands::report(&common, &run),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
