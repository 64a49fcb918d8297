//! Quarterly-rebalanced tilt backtests against a capitalization-proxy
//! benchmark: fixed score tilts, optimizer tilts, daily drift accounting,
//! and a randomized-strategy confidence band around the realized metrics.
//!
//! Preparation is split from execution. [`prepare_backtest`] resolves
//! everything strategy-independent once (benchmark weights, score
//! cross-sections, calibration scenarios and their moments);
//! [`PreparedBacktest::run`] then executes a single strategy, so the
//! random-replication validation pays the expensive prework exactly once
//! and every replication sees the identical benchmark path.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{AlignedDataset, AssetId, Quarter};
use crate::error::{Error, Result};
use crate::optimizer::{
    bounds_from_sets, max_sharpe_with, mean_vector, min_cvar, min_evar, min_variance_with,
    sample_moments, Moments, ScenarioSet, SolveStatus,
};
use crate::risk_analytics::{
    metric_panel, quantile_type1_sorted, MetricPanel, QuarterSegment, ReturnSeries, WeightSeries,
    METRIC_NAMES,
};
use crate::scoring::compute_smis;
use crate::seeding::splitmix64;
use crate::selection::{build_selection, SelectionResult, StrategyKind, StrategySpec};

/// Diagnostic kind: a quarter could not be run at all and its holding
/// days are excluded from both the strategy and the benchmark path.
pub const DIAG_QUARTER_DROPPED: &str = "quarter_dropped";
/// Diagnostic kind: selection failed for a quarter, benchmark weights held.
pub const DIAG_SELECTION_SKIPPED: &str = "selection_skipped";
/// Diagnostic kind: the optimizer returned no usable solution, benchmark
/// weights held.
pub const DIAG_SOLVER_FALLBACK: &str = "solver_fallback";
/// Diagnostic kind: the sample covariance needed eigenvalue clipping.
pub const DIAG_COVARIANCE_CLIPPED: &str = "covariance_clipped";
/// Diagnostic kind: validation settings produce an unstable band.
pub const DIAG_VALIDATION_WARNING: &str = "validation_warning";

/// Portfolio construction engine run at each rebalance.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Engine {
    /// Benchmark plus a fixed long-short overlay on the selected sets.
    FixedTilt,
    /// CVaR minimization with tilt bounds and a benchmark-mean floor.
    OptCvar,
    /// Expectile-VaR minimization, same constraints as [`Engine::OptCvar`].
    OptEvar,
    /// Variance minimization, same constraints.
    OptMinVariance,
    /// Sharpe-ratio maximization with tilt bounds, risk-free rate 0.
    OptMaxSharpe,
}

impl Engine {
    /// Short name used in CLI arguments and report rows.
    pub fn label(&self) -> &'static str {
        match self {
            Engine::FixedTilt => "fixed",
            Engine::OptCvar => "cvar",
            Engine::OptEvar => "evar",
            Engine::OptMinVariance => "mv",
            Engine::OptMaxSharpe => "sharpe",
        }
    }

    /// True for engines that solve a program over calibration scenarios.
    pub fn is_optimized(&self) -> bool {
        !matches!(self, Engine::FixedTilt)
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Engine::FixedTilt),
            "cvar" => Ok(Engine::OptCvar),
            "evar" => Ok(Engine::OptEvar),
            "mv" => Ok(Engine::OptMinVariance),
            "sharpe" => Ok(Engine::OptMaxSharpe),
            other => Err(Error::Validation(format!(
                "unknown engine {other:?}, expected fixed|cvar|evar|mv|sharpe"
            ))),
        }
    }
}

/// Full parameterization of one backtest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// First rebalance quarter is the one starting on or after this date.
    pub start: NaiveDate,
    /// Holding windows are truncated at this date (inclusive).
    pub end: NaiveDate,
    /// Assets per selection side; must match `strategy.k`.
    pub k: usize,
    /// Total long overlay (= total short overlay) of the fixed tilt,
    /// spread evenly as overlay/k per selected asset. 0 disables tilting.
    pub overlay: f64,
    /// Daily returns per calibration window for the optimizer engines.
    pub calibration_days: usize,
    /// Confidence level of the CVaR / expectile-VaR objectives.
    pub alpha: f64,
    /// The selection strategy under test.
    pub strategy: StrategySpec,
    /// Portfolio construction engine.
    pub engine: Engine,
    /// Random replications for the validation band.
    pub n_random: usize,
    /// Two-sided confidence level of the validation band.
    pub ci_level: f64,
    /// Master seed; replication i uses a stream derived from (seed, i).
    pub rng_seed: u64,
    /// Number of largest eligible assets forming the benchmark.
    #[serde(default = "default_benchmark_size")]
    pub benchmark_size: usize,
    /// Escalate skipped selections to hard errors instead of falling back
    /// to benchmark weights.
    #[serde(default)]
    pub fail_on_skip: bool,
}

fn default_benchmark_size() -> usize {
    600
}

impl BacktestConfig {
    /// A config with the standard window (2010-04-01 to 2023-12-31),
    /// k = 100, overlay = 0.10, 250 calibration days, alpha = 0.95,
    /// 200 random replications at a 90% band, and a 600-asset benchmark.
    pub fn new(strategy: StrategySpec, engine: Engine) -> Self {
        BacktestConfig {
            start: NaiveDate::from_ymd_opt(2010, 4, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
            k: strategy.k,
            overlay: 0.10,
            calibration_days: 250,
            alpha: 0.95,
            strategy,
            engine,
            n_random: 200,
            ci_level: 0.90,
            rng_seed: 17,
            benchmark_size: default_benchmark_size(),
            fail_on_skip: false,
        }
    }

    /// Checks field ranges and cross-field consistency.
    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Validation(format!(
                "backtest window is empty: start {} >= end {}",
                self.start, self.end
            )));
        }
        if self.k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        if self.k != self.strategy.k {
            return Err(Error::Validation(format!(
                "config k = {} disagrees with strategy k = {}",
                self.k, self.strategy.k
            )));
        }
        if !(0.0..1.0).contains(&self.overlay) {
            return Err(Error::Validation(format!(
                "overlay must be in [0, 1), got {}",
                self.overlay
            )));
        }
        if self.calibration_days < 2 {
            return Err(Error::Validation(format!(
                "calibration_days must be >= 2, got {}",
                self.calibration_days
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) || self.alpha <= 0.0 {
            return Err(Error::Validation(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::Validation(format!(
                "ci_level must be in (0, 1), got {}",
                self.ci_level
            )));
        }
        if self.benchmark_size < 2 {
            return Err(Error::Validation(format!(
                "benchmark_size must be >= 2, got {}",
                self.benchmark_size
            )));
        }
        Ok(())
    }
}

/// One logged per-quarter or run-level event.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Quarter the event belongs to, if any.
    pub quarter: Option<Quarter>,
    /// One of the `DIAG_*` kinds.
    pub kind: String,
    /// Human-readable explanation.
    pub detail: String,
}

impl Diagnostic {
    fn new(quarter: Option<Quarter>, kind: &str, detail: impl Into<String>) -> Self {
        Diagnostic { quarter, kind: kind.to_owned(), detail: detail.into() }
    }
}

// ---------------------------------------------------------------------------
// Benchmark and tilt weights
// ---------------------------------------------------------------------------

/// Builds the benchmark for one quarter: the `size` largest eligible
/// assets by capitalization proxy (rebalance-day price x share count),
/// weighted proportionally to that proxy. Without share counts every
/// eligible asset has equal proxy, so the benchmark is the alphabetically
/// first `size` assets, equally weighted.
///
/// Returns sorted asset ids with aligned weights summing to 1.
pub fn build_benchmark(
    dataset: &AlignedDataset,
    quarter: Quarter,
    shares: Option<&BTreeMap<AssetId, f64>>,
    size: usize,
) -> Result<(Vec<AssetId>, Vec<f64>)> {
    if size < 2 {
        return Err(Error::Validation(format!("benchmark size must be >= 2, got {size}")));
    }
    let u = dataset.universe(quarter)?;
    if u.eligible.len() < 2 {
        return Err(Error::Validation(format!(
            "quarter {quarter} has {} eligible assets, benchmark needs at least 2",
            u.eligible.len()
        )));
    }
    let mut caps: Vec<(&AssetId, f64)> = Vec::with_capacity(u.eligible.len());
    for a in &u.eligible {
        let price = dataset.price_at(a, u.rebalance_idx).ok_or_else(|| {
            Error::Validation(format!("eligible asset {a} has no price on the rebalance day"))
        })?;
        let cap = match shares {
            Some(map) => {
                let sh = *map
                    .get(a)
                    .ok_or_else(|| Error::Validation(format!("no share count for asset {a}")))?;
                if !(sh.is_finite() && sh > 0.0) {
                    return Err(Error::Validation(format!(
                        "share count for asset {a} must be positive and finite, got {sh}"
                    )));
                }
                price * sh
            }
            None => 1.0,
        };
        caps.push((a, cap));
    }
    caps.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(y.0)));
    caps.truncate(size.min(caps.len()));
    caps.sort_by(|x, y| x.0.cmp(y.0));
    let total: f64 = caps.iter().map(|c| c.1).sum();
    Ok(caps.into_iter().map(|(a, c)| (a.clone(), c / total)).unzip())
}

/// Applies the long-short overlay to benchmark weights: each over-set
/// asset gains overlay/k, each under-set asset loses overlay/k, assets
/// outside the benchmark enter at 0 before the shift. The total stays 1;
/// under-set weights may go negative (signed exposure).
///
/// Returns the sorted union of benchmark and selected assets with
/// aligned weights.
pub fn tilt_weights(
    benchmark_ids: &[AssetId],
    benchmark_weights: &[f64],
    selection: &SelectionResult,
    overlay: f64,
    k: usize,
) -> Result<(Vec<AssetId>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Validation("tilt k must be >= 1".into()));
    }
    if benchmark_ids.len() != benchmark_weights.len() {
        return Err(Error::Validation(format!(
            "benchmark has {} ids but {} weights",
            benchmark_ids.len(),
            benchmark_weights.len()
        )));
    }
    if !(0.0..1.0).contains(&overlay) {
        return Err(Error::Validation(format!("overlay must be in [0, 1), got {overlay}")));
    }
    if selection.over.len() != k || selection.under.len() != k {
        return Err(Error::Validation(format!(
            "selection has {} over / {} under assets, tilt expects {k} per side",
            selection.over.len(),
            selection.under.len()
        )));
    }
    let delta = overlay / k as f64;
    let mut w: BTreeMap<AssetId, f64> =
        benchmark_ids.iter().cloned().zip(benchmark_weights.iter().copied()).collect();
    for a in &selection.over {
        *w.entry(a.clone()).or_insert(0.0) += delta;
    }
    for a in &selection.under {
        *w.entry(a.clone()).or_insert(0.0) -= delta;
    }
    Ok(w.into_iter().unzip())
}

// ---------------------------------------------------------------------------
// Preparation
// ---------------------------------------------------------------------------

/// Strategy-independent state of one rebalance quarter.
struct PreparedQuarter {
    quarter: Quarter,
    rebalance_idx: usize,
    /// Last calendar index whose return accrues to this quarter.
    last_hold_idx: usize,
    bench_ids: Vec<AssetId>,
    bench_weights: Vec<f64>,
    /// Benchmark weights keyed by asset, for tilt bounds. Opt engines only.
    bench_map: Option<BTreeMap<AssetId, f64>>,
    /// Scoreable selection cross-section, when scores exist.
    cross: Option<crate::selection::CrossSection>,
    /// Why `cross` is absent.
    cross_skip: Option<String>,
    /// Calibration scenarios over the benchmark constituents. Opt only.
    scenarios: Option<ScenarioSet>,
    /// Scenario moments. Variance and Sharpe engines only.
    moments: Option<Moments>,
    /// In-sample mean return of the benchmark, the optimizer mean floor.
    bench_floor: Option<f64>,
}

/// A backtest with all strategy-independent work done: run any number of
/// strategies against the same benchmark path without re-preparing.
pub struct PreparedBacktest<'a> {
    config: BacktestConfig,
    dataset: &'a AlignedDataset,
    quarters: Vec<PreparedQuarter>,
    diagnostics: Vec<Diagnostic>,
}

/// Output of one strategy execution over a prepared backtest.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Quarters actually run, in order.
    pub quarters: Vec<Quarter>,
    /// The realized metric panel.
    pub panel: MetricPanel,
    /// Concatenated daily portfolio returns.
    pub returns: ReturnSeries,
    /// Target and drifted weights per quarter.
    pub weights: WeightSeries,
    /// Events hit during this run (selection skips, solver fallbacks).
    pub diagnostics: Vec<Diagnostic>,
}

/// Resolves everything strategy-independent: per-quarter benchmarks,
/// score cross-sections, and (for optimizer engines) calibration
/// scenarios with moments. Quarters that cannot be run are dropped with
/// a diagnostic; their holding days are excluded from every path.
pub fn prepare_backtest<'a>(
    config: &BacktestConfig,
    dataset: &'a AlignedDataset,
    shares: Option<&BTreeMap<AssetId, f64>>,
) -> Result<PreparedBacktest<'a>> {
    config.validate()?;
    let optimized = config.engine.is_optimized();
    if optimized && dataset.spec.lookback_days < config.calibration_days {
        return Err(Error::Validation(format!(
            "dataset alignment lookback ({} days) is shorter than calibration_days ({}); \
             realign with a lookback of at least the calibration window",
            dataset.spec.lookback_days, config.calibration_days
        )));
    }
    let dates = dataset.calendar.dates();
    if dates.is_empty() || dates[0] > config.end {
        return Err(Error::Validation("no trading days inside the backtest window".into()));
    }
    // last calendar index usable for holding-period returns
    let end_cap = dates.partition_point(|d| *d <= config.end).saturating_sub(1);

    let mut quarters = Vec::new();
    let mut diagnostics = Vec::new();
    for (&q, u) in &dataset.universes {
        let qstart = q.start_date();
        if qstart < config.start || qstart > config.end {
            continue;
        }
        if u.eligible.len() < 2 {
            diagnostics.push(Diagnostic::new(
                Some(q),
                DIAG_QUARTER_DROPPED,
                format!("{} eligible assets, need at least 2", u.eligible.len()),
            ));
            continue;
        }
        let reb = u.rebalance_idx;
        let last_hold = u.hold_end_idx.min(end_cap);
        if last_hold <= reb {
            diagnostics.push(Diagnostic::new(
                Some(q),
                DIAG_QUARTER_DROPPED,
                "no holding days inside the window",
            ));
            continue;
        }
        if optimized && reb < config.calibration_days {
            diagnostics.push(Diagnostic::new(
                Some(q),
                DIAG_QUARTER_DROPPED,
                format!(
                    "only {reb} trading days of history, calibration needs {}",
                    config.calibration_days
                ),
            ));
            continue;
        }

        let (bench_ids, bench_weights) =
            build_benchmark(dataset, q, shares, config.benchmark_size)?;

        // Scores come from the previous quarter's holdings: the latest
        // information available at the rebalance.
        let mut cross = None;
        let mut cross_skip = None;
        match compute_smis(&dataset.panel, q.prev()) {
            Err(e) => cross_skip = Some(format!("no scores for {}: {e}", q.prev())),
            Ok(scores) => {
                let smis_by_asset: BTreeMap<&AssetId, f64> =
                    scores.iter().map(|s| (&s.asset_id, s.smis)).collect();
                let sel_universe: Vec<&AssetId> = if optimized {
                    bench_ids.iter().collect()
                } else {
                    u.eligible.iter().collect()
                };
                let mut esg = BTreeMap::new();
                let mut smis = BTreeMap::new();
                for a in sel_universe {
                    if let Some(&s) = smis_by_asset.get(a) {
                        esg.insert(a.clone(), u.esg[a].value);
                        smis.insert(a.clone(), s);
                    }
                }
                if esg.is_empty() {
                    cross_skip = Some("no scored assets in the selection universe".into());
                } else {
                    cross = Some(crate::selection::CrossSection::new(esg, smis)?);
                }
            }
        }

        let (mut bench_map, mut scenarios, mut moments, mut bench_floor) = (None, None, None, None);
        if optimized {
            let cols: Vec<usize> = bench_ids.iter().map(|a| dataset.asset_index[a]).collect();
            let mut rows = Vec::with_capacity(config.calibration_days);
            for d in (reb + 1 - config.calibration_days)..=reb {
                let (prev, cur) = (&dataset.price_matrix[d - 1], &dataset.price_matrix[d]);
                rows.push(cols.iter().map(|&c| cur[c] / prev[c] - 1.0).collect());
            }
            let scen = ScenarioSet::new(rows, bench_ids.clone())?;
            let mean = mean_vector(&scen);
            bench_floor =
                Some(mean.iter().zip(&bench_weights).map(|(m, w)| m * w).sum::<f64>());
            if matches!(config.engine, Engine::OptMinVariance | Engine::OptMaxSharpe) {
                let m = sample_moments(&scen);
                if m.clipped_eigenvalues > 0 {
                    diagnostics.push(Diagnostic::new(
                        Some(q),
                        DIAG_COVARIANCE_CLIPPED,
                        format!("{} negative eigenvalues clipped", m.clipped_eigenvalues),
                    ));
                }
                moments = Some(m);
            }
            bench_map = Some(
                bench_ids.iter().cloned().zip(bench_weights.iter().copied()).collect(),
            );
            scenarios = Some(scen);
        }

        quarters.push(PreparedQuarter {
            quarter: q,
            rebalance_idx: reb,
            last_hold_idx: last_hold,
            bench_ids,
            bench_weights,
            bench_map,
            cross,
            cross_skip,
            scenarios,
            moments,
            bench_floor,
        });
    }
    if quarters.is_empty() {
        return Err(Error::Validation(
            "no quarter inside the backtest window could be run".into(),
        ));
    }
    Ok(PreparedBacktest { config: config.clone(), dataset, quarters, diagnostics })
}

impl PreparedBacktest<'_> {
    /// The configuration this backtest was prepared with.
    pub fn config(&self) -> &BacktestConfig {
        &self.config
    }

    /// Quarters that will run, in order.
    pub fn quarters(&self) -> Vec<Quarter> {
        self.quarters.iter().map(|p| p.quarter).collect()
    }

    /// Events recorded during preparation (dropped quarters, covariance
    /// clipping).
    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// Executes one strategy over the prepared quarters; `None` runs the
    /// plain benchmark. Deterministic given the strategy and the
    /// preparation inputs.
    pub fn run(&self, strategy: Option<&StrategySpec>) -> Result<RunOutput> {
        if let Some(s) = strategy {
            if s.k != self.config.k {
                return Err(Error::Validation(format!(
                    "strategy k = {} disagrees with config k = {}",
                    s.k, self.config.k
                )));
            }
        }
        let mut quarters = Vec::with_capacity(self.quarters.len());
        let mut segments = Vec::with_capacity(self.quarters.len());
        let mut dates = Vec::new();
        let mut values = Vec::new();
        let mut diagnostics = Vec::new();
        for pq in &self.quarters {
            let (ids, target) = self.target_for(pq, strategy, &mut diagnostics)?;
            let (segment, rets) =
                drift_segment(self.dataset, ids, target, pq.rebalance_idx, pq.last_hold_idx)?;
            dates.extend_from_slice(&segment.daily_dates);
            values.extend(rets);
            segments.push(segment);
            quarters.push(pq.quarter);
        }
        let returns = ReturnSeries { dates, values };
        let weights = WeightSeries { segments };
        let panel = metric_panel(&returns, &weights)?;
        Ok(RunOutput { quarters, panel, returns, weights, diagnostics })
    }

    /// Target weights of one quarter: benchmark, tilted benchmark, or an
    /// optimized portfolio, with fallback to benchmark weights on skips.
    fn target_for(
        &self,
        pq: &PreparedQuarter,
        strategy: Option<&StrategySpec>,
        diagnostics: &mut Vec<Diagnostic>,
    ) -> Result<(Vec<AssetId>, Vec<f64>)> {
        let bench = || (pq.bench_ids.clone(), pq.bench_weights.clone());
        let Some(spec) = strategy else {
            return Ok(bench());
        };
        // Random draws get a fresh stream each quarter so replications do
        // not correlate across quarters.
        let resolved = if spec.kind == StrategyKind::Random {
            let base = spec
                .seed
                .ok_or_else(|| Error::Validation("random strategy without a seed".into()))?;
            StrategySpec {
                seed: Some(splitmix64(base, pq.quarter.index() as u64)),
                ..*spec
            }
        } else {
            *spec
        };
        let Some(cross) = &pq.cross else {
            let reason = pq.cross_skip.clone().unwrap_or_else(|| "no cross-section".into());
            if self.config.fail_on_skip {
                return Err(Error::Validation(format!("{}: {reason}", pq.quarter)));
            }
            diagnostics.push(Diagnostic::new(Some(pq.quarter), DIAG_SELECTION_SKIPPED, reason));
            return Ok(bench());
        };
        // Overlapping corners happen when both opposite-corner walks run
        // deep on anti-correlated scores and claim the same assets; the
        // strategy cannot form a disjoint book that quarter, same as an
        // infeasible corner.
        let sel = match build_selection(&resolved, cross) {
            Ok(sel) => sel,
            Err(
                e @ (Error::InsufficientUniverse { .. }
                | Error::InfeasibleCorner { .. }
                | Error::OverlappingSelection(_)),
            ) => {
                if self.config.fail_on_skip {
                    return Err(e);
                }
                diagnostics.push(Diagnostic::new(
                    Some(pq.quarter),
                    DIAG_SELECTION_SKIPPED,
                    e.to_string(),
                ));
                return Ok(bench());
            }
            Err(e) => return Err(e),
        };
        if self.config.engine == Engine::FixedTilt {
            return tilt_weights(
                &pq.bench_ids,
                &pq.bench_weights,
                &sel,
                self.config.overlay,
                self.config.k,
            );
        }
        let scen = pq.scenarios.as_ref().expect("optimizer quarter has scenarios");
        let bmap = pq.bench_map.as_ref().expect("optimizer quarter has a benchmark map");
        let bounds = bounds_from_sets(bmap, scen.asset_ids(), &sel.over, &sel.under)?;
        let solved = match self.config.engine {
            Engine::OptCvar => min_cvar(scen, &bounds, pq.bench_floor, self.config.alpha),
            Engine::OptEvar => min_evar(scen, &bounds, pq.bench_floor, self.config.alpha),
            Engine::OptMinVariance => min_variance_with(
                scen,
                pq.moments.as_ref().expect("variance engine has moments"),
                &bounds,
                pq.bench_floor,
            ),
            Engine::OptMaxSharpe => max_sharpe_with(
                scen,
                pq.moments.as_ref().expect("Sharpe engine has moments"),
                &bounds,
                0.0,
            ),
            Engine::FixedTilt => unreachable!("handled above"),
        };
        match solved {
            Ok(p) if p.status == SolveStatus::Optimal => Ok((scen.asset_ids().to_vec(), p.weights)),
            Ok(p) => {
                diagnostics.push(Diagnostic::new(
                    Some(pq.quarter),
                    DIAG_SOLVER_FALLBACK,
                    format!("solver status {:?}, holding benchmark weights", p.status),
                ));
                Ok(bench())
            }
            Err(Error::AssumptionViolated(msg)) => {
                diagnostics.push(Diagnostic::new(Some(pq.quarter), DIAG_SOLVER_FALLBACK, msg));
                Ok(bench())
            }
            Err(e) => Err(e),
        }
    }
}

/// Holds the target portfolio from the rebalance close through the last
/// holding day, drifting weights by realized returns. Returns the
/// completed segment and its daily portfolio returns.
fn drift_segment(
    dataset: &AlignedDataset,
    ids: Vec<AssetId>,
    target: Vec<f64>,
    rebalance_idx: usize,
    last_hold_idx: usize,
) -> Result<(QuarterSegment, Vec<f64>)> {
    let cols: Vec<usize> = ids
        .iter()
        .map(|a| {
            dataset
                .asset_index
                .get(a)
                .copied()
                .ok_or_else(|| Error::Validation(format!("asset {a} has no price series")))
        })
        .collect::<Result<_>>()?;
    let days = last_hold_idx - rebalance_idx;
    let mut w = target.clone();
    let mut asset_rets = vec![0.0; ids.len()];
    let mut daily_dates = Vec::with_capacity(days);
    let mut daily = Vec::with_capacity(days);
    let mut rets = Vec::with_capacity(days);
    for d in (rebalance_idx + 1)..=last_hold_idx {
        let (prev, cur) = (&dataset.price_matrix[d - 1], &dataset.price_matrix[d]);
        let mut rp = 0.0;
        for (j, &c) in cols.iter().enumerate() {
            let r = cur[c] / prev[c] - 1.0;
            if !r.is_finite() {
                return Err(Error::Validation(format!(
                    "price gap for held asset {} on {}",
                    ids[j],
                    dataset.calendar.dates()[d]
                )));
            }
            asset_rets[j] = r;
            rp += w[j] * r;
        }
        let growth = 1.0 + rp;
        if growth <= 0.0 {
            return Err(Error::AssumptionViolated(format!(
                "portfolio lost its entire value on {}",
                dataset.calendar.dates()[d]
            )));
        }
        for (wj, r) in w.iter_mut().zip(&asset_rets) {
            *wj = *wj * (1.0 + r) / growth;
        }
        daily_dates.push(dataset.calendar.dates()[d]);
        daily.push(w.clone());
        rets.push(rp);
    }
    let segment = QuarterSegment {
        rebalance_date: dataset.calendar.dates()[rebalance_idx],
        asset_ids: ids,
        target,
        daily_dates,
        daily,
    };
    Ok((segment, rets))
}

// ---------------------------------------------------------------------------
// Reports and validation
// ---------------------------------------------------------------------------

/// Where a realized metric landed relative to the random-strategy band.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    /// Outside the band in the favorable direction.
    Better,
    /// Outside the band in the unfavorable direction.
    Worse,
    /// Inside the band.
    Inside,
}

impl Flag {
    /// Lowercase name used in report columns.
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::Better => "better",
            Flag::Worse => "worse",
            Flag::Inside => "inside",
        }
    }
}

/// Confidence band and flag of one metric.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricCi {
    /// Metric name, one of [`METRIC_NAMES`].
    pub name: &'static str,
    /// Lower percentile bound of the random distribution.
    pub lo: f64,
    /// Upper percentile bound.
    pub hi: f64,
    /// Realized metric vs the band, direction-aware.
    pub flag: Flag,
}

/// Result of the random-replication validation.
#[derive(Clone, Debug)]
pub struct ValidationResult {
    /// Replications actually run.
    pub n_random: usize,
    /// Per-metric bands, `None` when no replications were requested.
    pub metrics: Option<Vec<MetricCi>>,
    /// Stability warnings (small n_random).
    pub warnings: Vec<String>,
}

/// Reruns the prepared backtest `n_random` times with seeded random
/// selections and brackets each realized metric by empirical percentiles
/// of the replication distribution at the configured confidence level.
/// Replication i draws its per-quarter streams from (rng_seed, i), so
/// results are independent of thread count and execution order.
pub fn random_validation(
    prepared: &PreparedBacktest<'_>,
    realized: &MetricPanel,
) -> Result<ValidationResult> {
    let cfg = prepared.config();
    let mut warnings = Vec::new();
    if cfg.n_random == 0 {
        return Ok(ValidationResult { n_random: 0, metrics: None, warnings });
    }
    if cfg.n_random < 20 {
        warnings.push(format!(
            "n_random = {} is below 20, the confidence band is unstable",
            cfg.n_random
        ));
    }
    let panels: Vec<MetricPanel> = (0..cfg.n_random)
        .into_par_iter()
        .map(|i| {
            let spec = StrategySpec {
                kind: StrategyKind::Random,
                k: cfg.k,
                seed: Some(splitmix64(cfg.rng_seed, i as u64)),
            };
            prepared.run(Some(&spec)).map(|out| out.panel)
        })
        .collect::<Result<_>>()?;

    let lo_p = (1.0 - cfg.ci_level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let realized_rows = realized.as_rows();
    let mut metrics = Vec::with_capacity(METRIC_NAMES.len());
    for (idx, &name) in METRIC_NAMES.iter().enumerate() {
        let mut values: Vec<f64> = panels.iter().map(|p| p.as_rows()[idx].1).collect();
        values.sort_by(f64::total_cmp);
        let lo = quantile_type1_sorted(&values, lo_p);
        let hi = quantile_type1_sorted(&values, hi_p);
        let v = realized_rows[idx].1;
        let higher_better = MetricPanel::higher_is_better(name);
        let flag = if v > hi {
            if higher_better { Flag::Better } else { Flag::Worse }
        } else if v < lo {
            if higher_better { Flag::Worse } else { Flag::Better }
        } else {
            Flag::Inside
        };
        metrics.push(MetricCi { name, lo, hi, flag });
    }
    Ok(ValidationResult { n_random: cfg.n_random, metrics: Some(metrics), warnings })
}

/// Everything produced by one full backtest: strategy and benchmark
/// panels and paths, diagnostics, and (when attached) the validation
/// bands.
#[derive(Clone, Debug)]
pub struct BacktestReport {
    /// Label of the strategy row in the report.
    pub strategy_label: String,
    /// Engine the backtest ran with.
    pub engine: Engine,
    /// Quarters that ran.
    pub quarters: Vec<Quarter>,
    /// Realized strategy metrics.
    pub strategy_panel: MetricPanel,
    /// Benchmark metrics over the identical dates.
    pub benchmark_panel: MetricPanel,
    /// Daily strategy returns.
    pub strategy_returns: ReturnSeries,
    /// Daily benchmark returns.
    pub benchmark_returns: ReturnSeries,
    /// Strategy weight path.
    pub strategy_weights: WeightSeries,
    /// Benchmark weight path.
    pub benchmark_weights: WeightSeries,
    /// Preparation plus strategy-run diagnostics, in quarter order.
    pub diagnostics: Vec<Diagnostic>,
    /// Random-replication bands, when computed.
    pub validation: Option<ValidationResult>,
}

/// Prepares and runs one backtest: the configured strategy against the
/// benchmark over identical dates. Validation bands are not computed
/// here; see [`random_validation`].
pub fn run_backtest(
    config: &BacktestConfig,
    dataset: &AlignedDataset,
    shares: Option<&BTreeMap<AssetId, f64>>,
) -> Result<BacktestReport> {
    let prepared = prepare_backtest(config, dataset, shares)?;
    let strategy = prepared.run(Some(&config.strategy))?;
    let benchmark = prepared.run(None)?;
    let mut diagnostics = prepared.diagnostics.clone();
    diagnostics.extend(strategy.diagnostics);
    Ok(BacktestReport {
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
        validation: None,
    })
}

/// [`run_backtest`] restricted to the fixed-tilt engine.
pub fn run_fixed_tilt(
    config: &BacktestConfig,
    dataset: &AlignedDataset,
    shares: Option<&BTreeMap<AssetId, f64>>,
) -> Result<BacktestReport> {
    if config.engine != Engine::FixedTilt {
        return Err(Error::Validation(format!(
            "run_fixed_tilt called with engine {}",
            config.engine
        )));
    }
    run_backtest(config, dataset, shares)
}

/// [`run_backtest`] restricted to the optimizer engines.
pub fn run_opt_tilt(
    config: &BacktestConfig,
    dataset: &AlignedDataset,
    shares: Option<&BTreeMap<AssetId, f64>>,
) -> Result<BacktestReport> {
    if !config.engine.is_optimized() {
        return Err(Error::Validation(
            "run_opt_tilt needs an optimizer engine (cvar|evar|mv|sharpe)".into(),
        ));
    }
    run_backtest(config, dataset, shares)
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Writes the two-row report: the strategy with its confidence-band
/// columns, then the benchmark. Formatting is plain shortest-roundtrip
/// `Display`, so byte output is deterministic.
pub fn write_report_csv(report: &BacktestReport, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("strategy");
    for m in METRIC_NAMES {
        header.push_str(&format!(",{m}"));
    }
    for m in METRIC_NAMES {
        header.push_str(&format!(",ci_lo_{m},ci_hi_{m},flag_{m}"));
    }
    writeln!(f, "{header}")?;

    let mut row = report.strategy_label.clone();
    for (_, v) in report.strategy_panel.as_rows() {
        row.push_str(&format!(",{v}"));
    }
    match report.validation.as_ref().and_then(|v| v.metrics.as_ref()) {
        Some(metrics) => {
            for ci in metrics {
                row.push_str(&format!(",{},{},{}", ci.lo, ci.hi, ci.flag.as_str()));
            }
        }
        None => {
            for _ in METRIC_NAMES {
                row.push_str(",,,");
            }
        }
    }
    writeln!(f, "{row}")?;

    let mut brow = String::from("benchmark");
    for (_, v) in report.benchmark_panel.as_rows() {
        brow.push_str(&format!(",{v}"));
    }
    for _ in METRIC_NAMES {
        brow.push_str(",,,");
    }
    writeln!(f, "{brow}")?;
    Ok(())
}

/// Writes rebalance target weights as `date,asset_id,weight` rows, one
/// per nonzero target holding, in (date, asset) order.
pub fn write_weights_csv(weights: &WeightSeries, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "date,asset_id,weight")?;
    for seg in &weights.segments {
        for (a, w) in seg.asset_ids.iter().zip(&seg.target) {
            if *w != 0.0 {
                writeln!(f, "{},{a},{w}", seg.rebalance_date)?;
            }
        }
    }
    Ok(())
}

/// Writes diagnostics as one JSON object per line.
pub fn write_diagnostics_jsonl(diagnostics: &[Diagnostic], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in diagnostics {
        let line = serde_json::to_string(d)
            .map_err(|e| Error::Validation(format!("diagnostic serialization: {e}")))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}
