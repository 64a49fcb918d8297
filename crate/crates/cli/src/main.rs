//! `smislab`: scoring, backtesting, validation, and regression over
//! fund-holdings panels, plus a synthetic dataset generator.
//!
//! Every command writes its artifacts under `--out` together with a
//! `manifest.json` recording the configuration, input digests, and
//! artifact list. Exit codes: 0 success, 1 data or solver error,
//! 2 usage error.

mod commands;
mod common;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "smislab", version, about = "Market-implied sustainability scoring pipeline")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fund/price/ESG dataset with planted effects.
    Synth(commands::synth::Args),
    /// Score each asset-quarter from holdings propensity gaps.
    Score(commands::score::Args),
    /// Backtest one selection strategy against the benchmark.
    Backtest(commands::backtest::Args),
    /// Backtest plus confidence bands from random replications.
    Validate(commands::validate::Args),
    /// Quantile-regress scores on lagged firm fundamentals.
    Regress(commands::regress::Args),
    /// Export figure-ready CSVs (score scatter, sector means).
    Report(commands::report::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        common::init_thread_pool(jobs)?;
    }
    match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Backtest(args) => commands::backtest::run(args),
        Command::Validate(args) => commands::validate::run(args),
        Command::Regress(args) => commands::regress::run(args),
        Command::Report(args) => commands::report::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<common::UsageError>().is_some() { 2 } else { 1 };
        std::process::exit(code);
    }
}
