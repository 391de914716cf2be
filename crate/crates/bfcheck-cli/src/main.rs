mod config;
mod plot;
mod runner;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Simulation-based validation of Bayes factor computation.
#[derive(Debug, Parser)]
#[command(name = "bfcheck", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Master seed; drawn and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario identifier, e.g. poisson-nb (see --help for the list).
    #[arg(long)]
    scenario: Option<String>,
    /// Fault to inject: flip | constant | ignore-half | log-noise:SD | log-bias:B.
    #[arg(long)]
    fault: Option<String>,
    /// Accept rule: mean-range:LO:HI.
    #[arg(long)]
    accept: Option<String>,
    /// Number of simulations.
    #[arg(long)]
    sims: Option<usize>,
    /// Posterior draws per simulation (M).
    #[arg(long)]
    draws: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run simulations and write records.csv + run.json.
    Simulate(CommonArgs),
    /// Run simulations and every applicable check; write checks.json.
    Check(CommonArgs),
    /// Statistic histories over a shared simulation pool; write curves.csv.
    History {
        #[command(flatten)]
        common: CommonArgs,
        /// Length of one history (the pool is 10x larger by default).
        #[arg(long)]
        history_length: Option<usize>,
        /// Number of resampled histories.
        #[arg(long)]
        histories: Option<usize>,
        /// Checks to track, comma separated (sbc:<q> | miscalibration | dap).
        #[arg(long)]
        checks: Option<String>,
    },
    /// False-positive / power table over fresh runs; write table.csv.
    Table {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenarios like good-cauchy or poisson-nb+log-bias:2, comma separated.
        #[arg(long)]
        scenarios: Option<String>,
        /// Sample sizes, comma separated.
        #[arg(long)]
        sizes: Option<String>,
        /// Runs per cell.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Render SVG plots from existing CSV artifacts in --out.
    Report(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(common) => runner::simulate(&common),
        Command::Check(common) => runner::check(&common),
        Command::History {
            common,
            history_length,
            histories,
            checks,
        } => runner::history(&common, history_length, histories, checks.as_deref()),
        Command::Table {
            common,
            scenarios,
            sizes,
            runs,
        } => runner::table(&common, scenarios.as_deref(), sizes.as_deref(), runs),
        Command::Report(common) => runner::report(&common),
    };
    match result {
        Ok(rejected) => {
            if rejected {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
