mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedmm::federation::Executor;

use commands::Axis;
use config::Overrides;

/// Multimodal federated learning simulator.
///
/// Worker threads for client training are taken from MMFED_WORKERS
/// (default: all cores); results do not depend on the worker count.
#[derive(Parser)]
#[command(name = "fedmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset from a TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store modality tensors in a binary sidecar instead of inline JSON.
        #[arg(long)]
        binary: bool,
    },
    /// Run one experiment (all seeds or folds) from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-run an experiment over a grid of corruption rates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated rates, e.g. 0,0.1,0.2.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tabulate the summaries of finished runs.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> fedmm::Result<bool> {
    match cli.command {
        Command::Synth { spec, out, binary } => commands::synth(&spec, &out, binary).map(|_| true),
        Command::Run { config, overrides } => {
            let exec = Executor::from_env()?;
            commands::run(&config, &overrides, &exec).map(|_| true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            overrides,
        } => {
            let exec = Executor::from_env()?;
            commands::sweep(&config, &overrides, axis, &values, &exec)
        }
        Command::Report { dirs, csv } => commands::report(&dirs, csv.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
