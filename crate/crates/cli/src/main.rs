//! Command-line harness for the cohort-based trust-region optimizer: seeded
//! benchmark runs, run-set comparison, and the release acceptance gate.
//!
//! Given one config and one seed, every output file is byte-identical across
//! invocations and machines.

mod compare_cmd;
mod output;
mod run_cmd;
mod schema;
mod stats;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ctrcbo",
    version,
    about = "Seeded ad-load optimization runs, run-set comparison, and the acceptance gate",
    long_about = "Seeded ad-load optimization runs, run-set comparison, and the acceptance \
                  gate.\n\nEvery flag can also be set through an environment variable with the \
                  CTRCBO_ prefix (CTRCBO_CONFIG, CTRCBO_SEEDS, CTRCBO_ALGO, CTRCBO_OUT, \
                  CTRCBO_FORMAT); explicit flags win over the environment."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute seeded runs and write metrics, manifest, and summary files.
    Run(run_cmd::RunArgs),
    /// Compare completed run directories and emit a report plus plot data.
    Compare(compare_cmd::CompareArgs),
    /// Run the full acceptance gate; exits nonzero if any criterion fails.
    Accept,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_cmd::execute(args),
        Command::Compare(args) => compare_cmd::execute(args),
        Command::Accept => accept(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn accept() -> anyhow::Result<()> {
    let results = ctrcbo::acceptance::run_all();
    for result in &results {
        println!("{result}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        anyhow::bail!("{failed} of {} acceptance criteria failed", results.len());
    }
    Ok(())
}
