//! `ndgd`: run experiments, print parameter schedules and verify the
//! probabilistic bounds empirically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Suite;

#[derive(Parser)]
#[command(name = "ndgd", version, about = "Noisy distributed gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and write traces plus metadata.
    ///
    /// Exit codes: 1 config error, 2 infeasible schedule, 3 divergence.
    Run { config: PathBuf },
    /// Monte Carlo and exact checks; exit code 1 if any check fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 6.0)]
        rho: f64,
        /// Overrides the per-check default trial counts.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "verification.json")]
        out: PathBuf,
    },
    /// Print the schedule for one or more rho values; exit code 2 if any is
    /// infeasible.
    Schedule {
        /// Repeatable; defaults to 1, 4, 16, 64, 256.
        #[arg(long)]
        rho: Vec<f64>,
        /// Experiment config providing the network and objective.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => commands::cmd_run(&config),
        Command::Verify { suite, rho, trials, seed, out } => commands::cmd_verify(suite, rho, trials, seed, &out),
        Command::Schedule { rho, config, json } => {
            let rhos = if rho.is_empty() { vec![1.0, 4.0, 16.0, 64.0, 256.0] } else { rho };
            commands::cmd_schedule(&rhos, config.as_deref(), json)
        }
    };
    ExitCode::from(code as u8)
}
