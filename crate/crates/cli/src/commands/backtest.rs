//! `smislab backtest`: run one strategy against the benchmark.
//!
//! Also hosts the flag groups and plumbing shared with `validate`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::bail;
use chrono::NaiveDate;
use clap::ValueEnum;
use smislab_core::backtest::{
    write_diagnostics_jsonl, write_report_csv, write_weights_csv, DIAG_SELECTION_SKIPPED,
};
use smislab_core::synth::read_ground_truth;
use smislab_core::{
    align_dataset, impute_single_gaps, load_esg, load_panel, load_prices, run_backtest,
    AlignedDataset, AlignmentSpec, AssetId, BacktestConfig, BacktestReport, Engine, StrategyKind,
    StrategySpec,
};

use crate::common::resolve_seed;
use crate::manifest::{with_manifest, ManifestBuilder};

#[derive(Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    /// Rank on ESG, both sides.
    Esg,
    /// Rank on the market-implied score, both sides.
    Smis,
    /// Over-weight the top-ESG/top-score corner, under-weight the opposite.
    Tt,
    /// Over-weight top-ESG/bottom-score, under-weight the opposite.
    Tb,
    /// Over-weight bottom-ESG/top-score, under-weight the opposite.
    Bt,
}

impl StrategyArg {
    fn kind(self) -> StrategyKind {
        match self {
            StrategyArg::Esg => StrategyKind::TopEsg,
            StrategyArg::Smis => StrategyKind::TopSmis,
            StrategyArg::Tt => StrategyKind::CornersTT,
            StrategyArg::Tb => StrategyKind::CornersTB,
            StrategyArg::Bt => StrategyKind::CornersBT,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EngineArg {
    /// Benchmark plus a fixed long-short overlay.
    #[value(alias = "fixed")]
    Tilt,
    /// CVaR minimization over calibration scenarios.
    Cvar,
    /// Expectile-VaR minimization.
    Evar,
    /// Variance minimization.
    Mv,
    /// Sharpe-ratio maximization.
    Sharpe,
}

impl EngineArg {
    fn engine(self) -> Engine {
        match self {
            EngineArg::Tilt => Engine::FixedTilt,
            EngineArg::Cvar => Engine::OptCvar,
            EngineArg::Evar => Engine::OptEvar,
            EngineArg::Mv => Engine::OptMinVariance,
            EngineArg::Sharpe => Engine::OptMaxSharpe,
        }
    }
}

/// Input files shared by backtest and validate.
#[derive(clap::Args)]
pub struct DataArgs {
    /// Holdings CSV (fund_id,quarter,asset_id,weight).
    #[arg(long)]
    pub holdings: PathBuf,
    /// Fund metadata CSV (fund_id,sfdr_label,aum).
    #[arg(long)]
    pub funds: PathBuf,
    /// Daily price CSV (asset_id,date,price).
    #[arg(long)]
    pub prices: PathBuf,
    /// Yearly ESG and covariate CSV.
    #[arg(long)]
    pub esg: PathBuf,
    /// Optional shares-outstanding CSV (ground-truth schema); enables a
    /// capitalization-weighted benchmark instead of an equal-weighted one.
    #[arg(long)]
    pub shares: Option<PathBuf>,
}

impl DataArgs {
    pub fn register(&self, b: &mut ManifestBuilder) {
        b.input("holdings", &self.holdings);
        b.input("funds", &self.funds);
        b.input("prices", &self.prices);
        b.input("esg", &self.esg);
        if let Some(p) = &self.shares {
            b.input("shares", p);
        }
    }

    /// Loads, imputes, and aligns everything a backtest needs.
    pub fn load(&self, lookback_days: usize) -> anyhow::Result<LoadedData> {
        let panel = load_panel(&self.holdings, &self.funds)?;
        let panel = impute_single_gaps(&panel);
        let prices = load_prices(&self.prices)?;
        let esg = load_esg(&self.esg)?;
        let dataset = align_dataset(panel, prices, esg, AlignmentSpec { lookback_days })?;
        let shares = match &self.shares {
            Some(p) => Some(
                read_ground_truth(p)?.into_iter().map(|(a, (_, s))| (a, s)).collect(),
            ),
            None => None,
        };
        Ok(LoadedData { dataset, shares })
    }
}

pub struct LoadedData {
    pub dataset: AlignedDataset,
    pub shares: Option<BTreeMap<AssetId, f64>>,
}

/// Strategy, engine, and window flags shared by backtest and validate.
#[derive(clap::Args)]
pub struct RunArgs {
    /// Selection strategy.
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Portfolio construction engine.
    #[arg(long, value_enum, default_value = "tilt")]
    pub engine: EngineArg,
    /// Assets per selection side.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Total long (= total short) overlay of the fixed tilt.
    #[arg(long, default_value_t = 0.10)]
    pub overlay: f64,
    /// Confidence level of the CVaR / expectile-VaR objectives.
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// Master seed (SMISLAB_SEED overrides).
    #[arg(long)]
    pub seed: Option<u64>,
    /// First rebalance on or after this date.
    #[arg(long, default_value = "2010-04-01")]
    pub start: NaiveDate,
    /// Holding windows truncated here (inclusive).
    #[arg(long, default_value = "2023-12-31")]
    pub end: NaiveDate,
    /// Daily returns per optimizer calibration window.
    #[arg(long, default_value_t = 250)]
    pub calibration_days: usize,
    /// Number of largest eligible assets in the benchmark.
    #[arg(long, default_value_t = 600)]
    pub benchmark_size: usize,
    /// Treat any skipped selection as a hard error.
    #[arg(long)]
    pub fail_on_skip: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    /// Builds the engine config; `n_random = 0` leaves validation off.
    pub fn config(&self, n_random: usize, ci_level: f64) -> anyhow::Result<BacktestConfig> {
        let strategy = StrategySpec::new(self.strategy.kind(), self.k, None)?;
        let mut config = BacktestConfig::new(strategy, self.engine.engine());
        config.start = self.start;
        config.end = self.end;
        config.overlay = self.overlay;
        config.alpha = self.alpha;
        config.calibration_days = self.calibration_days;
        config.benchmark_size = self.benchmark_size;
        config.fail_on_skip = self.fail_on_skip;
        config.n_random = n_random;
        config.ci_level = ci_level;
        config.rng_seed = resolve_seed(self.seed, config.rng_seed)?;
        Ok(config)
    }

    /// Optimizer engines need a calibration window of price history
    /// before each rebalance; the fixed tilt does not.
    pub fn lookback_days(&self) -> usize {
        if self.engine.engine().is_optimized() {
            self.calibration_days
        } else {
            0
        }
    }
}

/// A run where every quarter fell back to the benchmark never tested
/// the strategy; surface that as a hard error instead of a report that
/// silently equals the benchmark.
pub fn reject_if_never_selected(report: &BacktestReport) -> anyhow::Result<()> {
    let skipped =
        report.diagnostics.iter().filter(|d| d.kind == DIAG_SELECTION_SKIPPED).count();
    if !report.quarters.is_empty() && skipped == report.quarters.len() {
        bail!(
            "insufficient-universe: the selection was skipped in all {} quarters; \
             lower --k or widen the dataset",
            skipped
        );
    }
    Ok(())
}

/// Writes report.csv, weights.csv, and diagnostics.jsonl.
pub fn write_outputs(
    report: &BacktestReport,
    out: &Path,
    b: &mut ManifestBuilder,
) -> anyhow::Result<()> {
    write_report_csv(report, &out.join("report.csv"))?;
    b.artifact("report.csv");
    write_weights_csv(&report.strategy_weights, &out.join("weights.csv"))?;
    b.artifact("weights.csv");
    write_diagnostics_jsonl(&report.diagnostics, &out.join("diagnostics.jsonl"))?;
    b.artifact("diagnostics.jsonl");
    if !report.diagnostics.is_empty() {
        eprintln!(
            "note: {} diagnostic event(s) logged to diagnostics.jsonl",
            report.diagnostics.len()
        );
    }
    Ok(())
}

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config = args.run.config(0, 0.90)?;
    let mut builder =
        ManifestBuilder::new("backtest", serde_json::to_value(&config)?).seed(config.rng_seed);
    args.data.register(&mut builder);

    with_manifest(&args.run.out, builder, |b| {
        let loaded = args.data.load(args.run.lookback_days())?;
        let report = run_backtest(&config, &loaded.dataset, loaded.shares.as_ref())?;
        reject_if_never_selected(&report)?;
        write_outputs(&report, &args.run.out, b)
    })
}
