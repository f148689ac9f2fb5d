use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use edgepower_cli::commands;
use edgepower_cli::config::Experiment;

/// Stochastic power-state experiments for edge devices: analytical steady
/// states, seeded Monte Carlo, policy comparisons, sensitivity sweeps, and
/// heterogeneous fleet studies.
#[derive(Parser)]
#[command(name = "edgepower", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary distribution and expected power analytically.
    Steady(RunArgs),
    /// Compare Monte Carlo occupancy against the analytical steady state.
    Converge(RunArgs),
    /// Run the configured policies on one workload and compare them.
    Compare(RunArgs),
    /// Re-solve the steady state across a grid for one matrix entry.
    Sweep(RunArgs),
    /// Simulate the configured fleet under each scheduling strategy.
    Fleet(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV and summary outputs.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let (name, args, command): (_, _, fn(&Experiment, &std::path::Path) -> Result<String>) =
        match &cli.command {
            Command::Steady(a) => ("steady", a, commands::cmd_steady),
            Command::Converge(a) => ("converge", a, commands::cmd_converge),
            Command::Compare(a) => ("compare", a, commands::cmd_compare),
            Command::Sweep(a) => ("sweep", a, commands::cmd_sweep),
            Command::Fleet(a) => ("fleet", a, commands::cmd_fleet),
        };

    let experiment = Experiment::load(&args.config, args.seed)?;
    let summary = command(&experiment, &args.out)?;
    let summary_path = args.out.join(format!("{name}_summary.txt"));
    std::fs::write(&summary_path, &summary)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    print!("{summary}");
    Ok(())
}
