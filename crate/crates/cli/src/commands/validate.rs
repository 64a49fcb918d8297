//! `smislab validate`: backtest plus random-replication bands.

use smislab_core::{prepare_backtest, random_validation, BacktestReport};

use super::backtest::{reject_if_never_selected, write_outputs, DataArgs, RunArgs};
use crate::manifest::{with_manifest, ManifestBuilder};

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Random replications behind the confidence band.
    #[arg(long, default_value_t = 200)]
    n_random: usize,
    /// Two-sided confidence level of the band.
    #[arg(long, default_value_t = 0.90)]
    ci: f64,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config = args.run.config(args.n_random, args.ci)?;
    let mut builder =
        ManifestBuilder::new("validate", serde_json::to_value(&config)?).seed(config.rng_seed);
    args.data.register(&mut builder);

    with_manifest(&args.run.out, builder, |b| {
        let loaded = args.data.load(args.run.lookback_days())?;
        let prepared = prepare_backtest(&config, &loaded.dataset, loaded.shares.as_ref())?;
        let strategy = prepared.run(Some(&config.strategy))?;
        let benchmark = prepared.run(None)?;
        let validation = random_validation(&prepared, &strategy.panel)?;
        for w in &validation.warnings {
            eprintln!("warning: {w}");
        }
        let mut diagnostics = prepared.diagnostics().to_vec();
        diagnostics.extend(strategy.diagnostics);
        let report = BacktestReport {
            strategy_label: config.strategy.label().to_owned(),
            engine: config.engine,
            quarters: strategy.quarters,
            strategy_panel: strategy.panel,
            benchmark_panel: benchmark.panel,
            strategy_returns: strategy.returns,
            benchmark_returns: benchmark.returns,
            strategy_weights: strategy.weights,
            benchmark_weights: benchmark.weights,
            diagnostics,
            validation: Some(validation),
        };
        reject_if_never_selected(&report)?;
        write_outputs(&report, &args.run.out, b)
    })
}
