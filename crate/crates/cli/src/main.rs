//! `soel`: budgeted active anomaly detection from the command line.
//!
//! Exit status is 0 on success, 1 for invalid input or usage, 2 when a run
//! fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "soel", version, about = "Budgeted active anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for splitting, initialisation and querying.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the subcommand's settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (or directory for `split`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a contaminated train/test split.
    Split(commands::SplitArgs),
    /// Warm up, query, estimate the contamination and train once.
    Train(commands::TrainArgs),
    /// Run every (method, budget, seed) cell of an experiment config.
    Sweep(commands::SweepArgs),
    /// Monte-Carlo cover radius of query strategies.
    CoverStudy(commands::CoverArgs),
    /// Estimate the contamination ratio from scored, partly labelled rows.
    EstimateAlpha(commands::EstimateArgs),
    /// Check the cover-radius ranking guarantee on a labelled instance.
    CheckThm1(commands::CheckArgs),
    /// Serve the labelling HTTP API.
    Serve(commands::ServeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::CoverStudy(a) => commands::cover_study(a),
        Command::EstimateAlpha(a) => commands::estimate(a),
        Command::CheckThm1(a) => commands::check(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
