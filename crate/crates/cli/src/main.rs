//! `duet` — command-line pipeline for dual-encoder residual filtering:
//! generate synthetic scenarios, train, filter signals, evaluate alarm
//! rates, benchmark inference latency, grid-search hyperparameters, and
//! reproduce the built-in reference experiment end to end.

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use duet_cli::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "duet",
    version,
    about = "Dual-encoder residual filtering and alarm evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian dataset (optionally with an injected fault).
    Generate(commands::generate::GenerateArgs),
    /// Train the dual encoder on normal-condition data.
    Train(commands::train::TrainArgs),
    /// Run a dataset through the deterministic encoder.
    Filter(commands::filter::FilterArgs),
    /// Evaluate alarm rates on raw and filtered signals.
    Eval(commands::eval::EvalArgs),
    /// Measure per-sample inference latency.
    Bench(commands::bench::BenchArgs),
    /// Rank hyperparameter candidates by validation loss.
    Gridsearch(commands::gridsearch::GridsearchArgs),
    /// Reproduce the reference experiment end to end with fixed seeds.
    Repro(commands::repro::ReproArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(&args),
        Command::Train(args) => commands::train::run(&args),
        Command::Filter(args) => commands::filter::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Bench(args) => commands::bench::run(&args),
        Command::Gridsearch(args) => commands::gridsearch::run(&args),
        Command::Repro(args) => commands::repro::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
