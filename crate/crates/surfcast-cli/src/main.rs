//! `surfcast`: forecast surface time series with simultaneous,
//! distribution-free prediction bands.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod commands;
mod config;
mod csvio;
mod errors;
mod format;

use clap::{Parser, Subcommand};

use errors::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "surfcast",
    version,
    about = "Forecast gridded surface time series with conformal prediction bands",
    after_help = "Set SURFCAST_THREADS to bound the worker pool; results are \
                  identical at any thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a seeded surface autoregression and write it as FTS2
    Simulate(commands::SimulateArgs),
    /// Convert long-format CSV (t,i,j,value) into an FTS2 dataset
    ImportCsv(commands::ImportCsvArgs),
    /// Dump an FTS2 dataset to long-format CSV
    ExportCsv(commands::ExportCsvArgs),
    /// Run a replication study: coverage and band size across methods and cases
    Study(commands::StudyArgs),
    /// Build the one-step-ahead band for the frame after the series
    ForecastBand(commands::ForecastBandArgs),
    /// Roll a differenced forecast window across a raw series and score it
    Rolling(commands::RollingArgs),
}

fn init_threads() -> CliResult<()> {
    let raw = match std::env::var("SURFCAST_THREADS") {
        Ok(raw) => raw,
        Err(_) => return Ok(()),
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!("SURFCAST_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot configure {n} worker threads: {e}")))
}

fn run(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::ImportCsv(args) => commands::cmd_import_csv(args),
        Command::ExportCsv(args) => commands::cmd_export_csv(args),
        Command::Study(args) => commands::cmd_study(args),
        Command::ForecastBand(args) => commands::cmd_forecast_band(args),
        Command::Rolling(args) => commands::cmd_rolling(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
