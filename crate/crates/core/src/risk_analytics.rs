//! Return series and the full performance/risk metric panel: annualized
//! mean and volatility, Sharpe, VaR, CVaR, expectile-based EVaR, maximum
//! drawdown, turnover, asset counts, maximum weight, and HHI.
//!
//! Conventions, fixed so oracles match bit-for-bit: empirical quantiles use
//! the inverse-CDF (type-1) rule; the CVaR tail holds ceil((1-alpha)*T)
//! observations; annualization uses 250 trading days; Sharpe uses a zero
//! risk-free rate.

use chrono::NaiveDate;

use crate::data_model::{AssetId, PriceSeries};
use crate::error::{Error, Result};

/// Trading days per year used for annualization.
pub const ANNUALIZATION_DAYS: f64 = 250.0;

/// Threshold below which a weight counts as zero for asset counting.
pub const WEIGHT_EPS: f64 = 1e-8;

/// Dated simple returns.
#[derive(Clone, Debug, Default)]
pub struct ReturnSeries {
    /// Date of each return.
    pub dates: Vec<NaiveDate>,
    /// Simple returns, each > -1.
    pub values: Vec<f64>,
}

/// Daily simple returns r_t = p_t / p_{t-1} - 1 of a price series.
pub fn simple_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.prices.len() < 2 {
        return Err(Error::Validation(format!(
            "asset {}: need at least 2 prices for returns",
            prices.asset_id
        )));
    }
    let values = prices.prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    Ok(ReturnSeries { dates: prices.dates[1..].to_vec(), values })
}

/// Type-1 (inverse-CDF) empirical quantile of a sorted ascending sample:
/// the ceil(n*p)-th order statistic, p in (0, 1).
pub fn quantile_type1_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && p > 0.0 && p < 1.0);
    let n = sorted.len();
    let k = (n as f64 * p).ceil() as usize;
    sorted[k.max(1) - 1]
}

/// Type-1 empirical quantile of an unsorted sample.
pub fn quantile_type1(sample: &[f64], p: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Validation("quantile of empty sample".into()));
    }
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Validation(format!("quantile level {p} not in (0,1)")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_type1_sorted(&sorted, p))
}

/// Number of observations in the (1-alpha) tail: ceil((1-alpha) * t),
/// clamped to [1, t]. A 1e-9 guard absorbs float dirt so that, e.g.,
/// (1 - 0.95) * 20 counts 1 observation rather than 2.
pub fn tail_count(alpha: f64, t: usize) -> usize {
    let raw = ((1.0 - alpha) * t as f64 - 1e-9).ceil() as i64;
    raw.clamp(1, t as i64) as usize
}

/// Historical value at risk: the negated type-1 (1-alpha)-quantile.
pub fn var_alpha(returns: &[f64], alpha: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Validation("var_alpha on empty returns".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha {alpha} not in (0,1)")));
    }
    Ok(-quantile_type1(returns, 1.0 - alpha)?)
}

/// Conditional value at risk: mean loss over the worst ceil((1-alpha)*T)
/// observations. Always >= [`var_alpha`] at the same level. `alpha = 0` is
/// accepted and yields the full-sample mean loss.
pub fn cvar_alpha(returns: &[f64], alpha: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Validation("cvar_alpha on empty returns".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha {alpha} not in [0,1)")));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = tail_count(alpha, sorted.len());
    Ok(-(sorted[..m].iter().sum::<f64>() / m as f64))
}

/// The tau-expectile: the unique e with
/// tau * E[(X - e)+] = (1 - tau) * E[(e - X)+].
///
/// Solved exactly: the balance condition is piecewise linear in e between
/// order statistics, so the root is found by scanning segments; each
/// candidate is e = (tau * A_j + (1-tau) * B_j) / (tau * (n-j) + (1-tau) * j)
/// with B_j the sum of the j smallest points and A_j the rest.
pub fn expectile(sample: &[f64], tau: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Validation("expectile of empty sample".into()));
    }
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::Validation(format!("tau {tau} not in (0,1)")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mut below = 0.0;
    for j in 0..=n {
        let above = total - below;
        let denom = tau * (n - j) as f64 + (1.0 - tau) * j as f64;
        let e = (tau * above + (1.0 - tau) * below) / denom;
        let lo = if j == 0 { f64::NEG_INFINITY } else { sorted[j - 1] };
        let hi = if j == n { f64::INFINITY } else { sorted[j] };
        let tol = 1e-12 * (1.0 + e.abs());
        if e >= lo - tol && e <= hi + tol {
            return Ok(e);
        }
        if j < n {
            below += sorted[j];
        }
    }
    unreachable!("expectile balance equation always has a root in some segment")
}

/// Expectile-based entropic-style risk measure:
/// EVaR_alpha(X) = -expectile(X, 1 - alpha). At alpha = 0.5 this is the
/// negated mean.
pub fn evar_alpha(returns: &[f64], alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Validation(format!("alpha {alpha} not in (0,1)")));
    }
    Ok(-expectile(returns, 1.0 - alpha)?)
}

/// Maximum peak-to-trough decline of the cumulative wealth curve implied by
/// a return stream, as a fraction of the peak. In [0, 1] for returns > -1.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut wealth = 1.0_f64;
    let mut peak = 1.0_f64;
    let mut dd = 0.0_f64;
    for r in returns {
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        dd = dd.max((peak - wealth) / peak);
    }
    dd
}

// ---------------------------------------------------------------------------
// Weight series and the metric panel
// ---------------------------------------------------------------------------

/// One rebalance-to-rebalance stretch of a portfolio path.
#[derive(Clone, Debug)]
pub struct QuarterSegment {
    /// Date of the rebalance (weights set at this day's close).
    pub rebalance_date: NaiveDate,
    /// Assets carried over the segment, sorted; aligns the weight vectors.
    pub asset_ids: Vec<AssetId>,
    /// Target weights at the rebalance close; sums to 1.
    pub target: Vec<f64>,
    /// Dates whose returns accrue to this segment (strictly after the
    /// rebalance date, through the next rebalance date inclusive).
    pub daily_dates: Vec<NaiveDate>,
    /// End-of-day drifted weights, one vector per entry of `daily_dates`.
    pub daily: Vec<Vec<f64>>,
}

impl QuarterSegment {
    /// Drifted weights at the end of the segment (the next rebalance
    /// instant); the target itself when the segment holds no days.
    pub fn final_weights(&self) -> &[f64] {
        self.daily.last().unwrap_or(&self.target)
    }
}

/// Dated weight vectors produced by a backtest, one segment per rebalance.
#[derive(Clone, Debug, Default)]
pub struct WeightSeries {
    /// Segments in rebalance order.
    pub segments: Vec<QuarterSegment>,
}

/// The Table-style performance and risk panel of one strategy run.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricPanel {
    /// Annualized mean return, 250 x daily mean.
    pub mean_ann: f64,
    /// Daily historical VaR at 95%.
    pub var95: f64,
    /// Daily expectile-based EVaR at 95%.
    pub evar95: f64,
    /// Daily CVaR at 95%.
    pub cvar95: f64,
    /// Annualized volatility, sqrt(250) x daily standard deviation.
    pub std_ann: f64,
    /// mean_ann / std_ann, risk-free rate 0.
    pub sharpe: f64,
    /// Maximum drawdown of the wealth curve, in [0, 1].
    pub max_dd: f64,
    /// Average one-sided turnover across rebalances after the first.
    pub avg_turnover: f64,
    /// Average number of held assets (|w| > 1e-8) at rebalance targets.
    pub avg_n_assets: f64,
    /// Largest single weight observed over targets and daily drift.
    pub max_weight: f64,
    /// Average Herfindahl index (sum of squared target weights).
    pub hhi: f64,
}

/// Metric column order, matching the report layout.
pub const METRIC_NAMES: [&str; 11] = [
    "mean_ann",
    "var95",
    "evar95",
    "cvar95",
    "std_ann",
    "sharpe",
    "max_dd",
    "avg_turnover",
    "avg_n_assets",
    "max_weight",
    "hhi",
];

impl MetricPanel {
    /// (name, value) pairs in [`METRIC_NAMES`] order.
    pub fn as_rows(&self) -> [(&'static str, f64); 11] {
        [
            ("mean_ann", self.mean_ann),
            ("var95", self.var95),
            ("evar95", self.evar95),
            ("cvar95", self.cvar95),
            ("std_ann", self.std_ann),
            ("sharpe", self.sharpe),
            ("max_dd", self.max_dd),
            ("avg_turnover", self.avg_turnover),
            ("avg_n_assets", self.avg_n_assets),
            ("max_weight", self.max_weight),
            ("hhi", self.hhi),
        ]
    }

    /// Direction semantics for confidence-interval flags: true for metrics
    /// where larger is better (mean, Sharpe, diversification count), false
    /// for risk, cost, and concentration metrics.
    pub fn higher_is_better(name: &str) -> bool {
        matches!(name, "mean_ann" | "sharpe" | "avg_n_assets")
    }
}

/// One-sided turnover between a drifted previous portfolio and the next
/// target, aligned over the union of the two asset sets.
pub fn turnover(
    prev_ids: &[AssetId],
    prev_weights: &[f64],
    next_ids: &[AssetId],
    next_weights: &[f64],
) -> f64 {
    let mut sum = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < prev_ids.len() || j < next_ids.len() {
        let ord = match (prev_ids.get(i), next_ids.get(j)) {
            (Some(a), Some(b)) => a.cmp(b),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => unreachable!(),
        };
        match ord {
            std::cmp::Ordering::Less => {
                sum += prev_weights[i].abs();
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                sum += next_weights[j].abs();
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                sum += (next_weights[j] - prev_weights[i]).abs();
                i += 1;
                j += 1;
            }
        }
    }
    0.5 * sum
}

/// Computes the full metric panel of a portfolio path.
///
/// `returns` must cover exactly the union of the segments' daily dates, in
/// order; a mismatch is an error. VaR/CVaR/EVaR are daily figures at the
/// 95% level.
pub fn metric_panel(returns: &ReturnSeries, weights: &WeightSeries) -> Result<MetricPanel> {
    if returns.values.len() < 2 {
        return Err(Error::Validation("metric_panel needs at least 2 returns".into()));
    }
    let n_dates: usize = weights.segments.iter().map(|s| s.daily_dates.len()).sum();
    if n_dates != returns.dates.len() {
        return Err(Error::Validation(format!(
            "weight series covers {n_dates} days, returns cover {}",
            returns.dates.len()
        )));
    }
    let mut k = 0;
    for seg in &weights.segments {
        for d in &seg.daily_dates {
            if returns.dates[k] != *d {
                return Err(Error::Validation(format!(
                    "weight/return date mismatch at {d} vs {}",
                    returns.dates[k]
                )));
            }
            k += 1;
        }
    }

    let r = &returns.values;
    let t = r.len() as f64;
    let mean_d = r.iter().sum::<f64>() / t;
    let var_d = r.iter().map(|x| (x - mean_d).powi(2)).sum::<f64>() / (t - 1.0);
    let mean_ann = ANNUALIZATION_DAYS * mean_d;
    let std_ann = ANNUALIZATION_DAYS.sqrt() * var_d.sqrt();

    let segs = &weights.segments;
    let mut turn_sum = 0.0;
    for pair in segs.windows(2) {
        turn_sum += turnover(
            &pair[0].asset_ids,
            pair[0].final_weights(),
            &pair[1].asset_ids,
            &pair[1].target,
        );
    }
    let avg_turnover = if segs.len() > 1 { turn_sum / (segs.len() - 1) as f64 } else { 0.0 };

    let mut n_assets_sum = 0.0;
    let mut hhi_sum = 0.0;
    let mut max_weight = f64::NEG_INFINITY;
    for seg in segs {
        n_assets_sum += seg.target.iter().filter(|w| w.abs() > WEIGHT_EPS).count() as f64;
        hhi_sum += seg.target.iter().map(|w| w * w).sum::<f64>();
        for w in seg.target.iter().chain(seg.daily.iter().flatten()) {
            max_weight = max_weight.max(*w);
        }
    }
    let n_segs = segs.len().max(1) as f64;

    Ok(MetricPanel {
        mean_ann,
        var95: var_alpha(r, 0.95)?,
        evar95: evar_alpha(r, 0.95)?,
        cvar95: cvar_alpha(r, 0.95)?,
        std_ann,
        sharpe: mean_ann / std_ann,
        max_dd: max_drawdown(r),
        avg_turnover,
        avg_n_assets: n_assets_sum / n_segs,
        max_weight,
        hhi: hhi_sum / n_segs,
    })
}
