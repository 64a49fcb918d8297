//! Location-scale quantile regression of SMIS on lagged fundamentals,
//! with collinearity diagnostics and regression-panel assembly.
//!
//! The estimator fits conditional quantiles in three least-squares
//! passes: a location fit of y on X, a scale fit of |residuals| on X,
//! and an empirical quantile of the standardized residuals. The
//! coefficient at level tau is then beta_j + q(tau) * gamma_j, so the
//! whole coefficient path is affine in q(tau).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data_model::{AssetId, EsgRecord, Quarter};
use crate::error::{Error, Result};
use crate::risk_analytics::quantile_type1;
use crate::scoring::ScoreTable;
use crate::seeding::splitmix64;

/// Quantile levels reported by default.
pub const DEFAULT_TAUS: [f64; 7] = [0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95];

/// Fraction of fitted scales that may be clipped before the fit is
/// rejected as degenerate.
const MAX_CLIP_FRACTION: f64 = 0.05;

/// Relative singular-value cutoff below which a design matrix counts as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// An ordinary least squares fit.
#[derive(Clone, Debug)]
pub struct OlsFit {
    /// Coefficients, one per design column.
    pub coef: Vec<f64>,
    /// Per-row residuals y - X beta.
    pub residuals: Vec<f64>,
}

/// Least squares via singular value decomposition.
///
/// Errors with the indices of the collinear columns when the design is
/// rank deficient (relative singular value below 1e-10).
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if p == 0 {
        return Err(Error::Validation("design matrix has no columns".into()));
    }
    if y.len() != n {
        return Err(Error::Validation(format!("y has {} rows, X has {n}", y.len())));
    }
    if n < p {
        return Err(Error::Validation(format!("system is underdetermined: {n} rows, {p} columns")));
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if !(max_sv > 0.0) {
        return Err(Error::RankDeficient("design matrix is zero".into()));
    }
    let min_sv = svd.singular_values.min();
    if min_sv < RANK_TOL * max_sv {
        // name the columns loading on the null direction
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let (null_row, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one singular value");
        let null_dir = vt.row(null_row);
        let peak = null_dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cols: Vec<String> = null_dir
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1e-3 * peak)
            .map(|(j, _)| j.to_string())
            .collect();
        return Err(Error::RankDeficient(format!(
            "collinear design columns: [{}]",
            cols.join(", ")
        )));
    }
    let yv = DVector::from_column_slice(y);
    let coef = svd.solve(&yv, RANK_TOL * max_sv).map_err(|e| Error::RankDeficient(e.into()))?;
    let fitted = x * &coef;
    let residuals = yv - fitted;
    Ok(OlsFit { coef: coef.iter().copied().collect(), residuals: residuals.iter().copied().collect() })
}

/// Variance inflation factors, one per column.
///
/// Column j is regressed on all other columns plus an intercept;
/// VIF_j = 1 / (1 - R^2_j). Perfectly explained columns report infinity.
/// Columns must have positive variance (pass regressors, not the
/// intercept).
pub fn vif(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    if p < 2 {
        return Err(Error::Validation("vif needs at least two regressors".into()));
    }
    if n < p + 1 {
        return Err(Error::Validation(format!("vif needs more rows than columns: {n} x {p}")));
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let yj = x.column(j);
        let mean = yj.mean();
        let sst: f64 = yj.iter().map(|v| (v - mean).powi(2)).sum();
        if sst <= 0.0 {
            return Err(Error::Validation(format!("vif column {j} has zero variance")));
        }
        let mut others = DMatrix::zeros(n, p);
        others.column_mut(0).fill(1.0);
        let mut c = 1;
        for k in 0..p {
            if k != j {
                others.set_column(c, &x.column(k));
                c += 1;
            }
        }
        // min-norm least squares tolerates collinearity among the others
        let svd = others.svd(true, true);
        let coef = svd
            .solve(&DVector::from_iterator(n, yj.iter().copied()), 1e-12)
            .map_err(|e| Error::RankDeficient(e.into()))?;
        let resid = DVector::from_iterator(n, yj.iter().copied()) - others_times(&x, j, n, p, &coef);
        let ssr: f64 = resid.iter().map(|v| v * v).sum();
        let one_minus_r2 = ssr / sst;
        out.push(if one_minus_r2 < 1e-12 { f64::INFINITY } else { 1.0 / one_minus_r2 });
    }
    Ok(out)
}

/// Rebuilds the "others with intercept" design product for column j.
fn others_times(x: &DMatrix<f64>, j: usize, n: usize, p: usize, coef: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::from_element(n, coef[0]);
    let mut c = 1;
    for k in 0..p {
        if k != j {
            out += x.column(k) * coef[c];
            c += 1;
        }
    }
    out
}

/// A fitted location-scale quantile regression.
#[derive(Clone, Debug)]
pub struct MmqrFit {
    /// Quantile levels, strictly increasing.
    pub taus: Vec<f64>,
    /// Location coefficients (least squares of y on X).
    pub location_beta: Vec<f64>,
    /// Scale coefficients (least squares of |residuals| on X).
    pub scale_gamma: Vec<f64>,
    /// Standardized-residual quantile per tau.
    pub q_values: Vec<f64>,
    /// Per-tau coefficient vectors: coefficients[t][j] = beta_j + q(tau_t) gamma_j.
    pub coefficients: Vec<Vec<f64>>,
    /// Rows used in the fit.
    pub n_obs: usize,
    /// Fitted scales clipped to the positivity floor.
    pub clipped_scales: usize,
}

/// Fits the location-scale quantile regression at the given levels.
///
/// Non-positive fitted scales are clipped to 1e-6 times the mean absolute
/// fitted scale; more than 5% clipped rows reject the fit.
pub fn mmqr_fit(x: &DMatrix<f64>, y: &[f64], taus: &[f64]) -> Result<MmqrFit> {
    if taus.is_empty() {
        return Err(Error::Validation("mmqr needs at least one quantile level".into()));
    }
    if taus.iter().any(|t| !(0.0 < *t && *t < 1.0)) {
        return Err(Error::Validation("quantile levels must lie strictly inside (0, 1)".into()));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("quantile levels must be strictly increasing".into()));
    }
    let n = x.nrows();
    if n <= x.ncols() + 1 {
        return Err(Error::Validation(format!(
            "mmqr needs more rows than columns: {} x {}",
            n,
            x.ncols()
        )));
    }

    let location = ols(x, y)?;
    let abs_resid: Vec<f64> = location.residuals.iter().map(|r| r.abs()).collect();
    let scale = ols(x, &abs_resid)?;

    let fitted_scale: Vec<f64> = {
        let g = DVector::from_column_slice(&scale.coef);
        (x * g).iter().copied().collect()
    };
    let mean_abs: f64 = fitted_scale.iter().map(|s| s.abs()).sum::<f64>() / n as f64;
    if !(mean_abs > 0.0) {
        return Err(Error::ScaleDegenerate { clipped: n, total: n });
    }
    let floor = 1e-6 * mean_abs;
    let mut clipped = 0usize;
    let standardized: Vec<f64> = location
        .residuals
        .iter()
        .zip(&fitted_scale)
        .map(|(r, s)| {
            let s = if *s < floor {
                clipped += 1;
                floor
            } else {
                *s
            };
            r / s
        })
        .collect();
    if clipped as f64 > MAX_CLIP_FRACTION * n as f64 {
        return Err(Error::ScaleDegenerate { clipped, total: n });
    }

    let q_values: Vec<f64> = taus
        .iter()
        .map(|&t| quantile_type1(&standardized, t))
        .collect::<Result<_>>()?;
    let coefficients: Vec<Vec<f64>> = q_values
        .iter()
        .map(|&q| {
            location
                .coef
                .iter()
                .zip(&scale.coef)
                .map(|(b, g)| b + q * g)
                .collect()
        })
        .collect();
    Ok(MmqrFit {
        taus: taus.to_vec(),
        location_beta: location.coef,
        scale_gamma: scale.coef,
        q_values,
        coefficients,
        n_obs: n,
        clipped_scales: clipped,
    })
}

/// Cluster bootstrap standard errors for [`mmqr_fit`].
///
/// Clusters (assets) are resampled with replacement; each replicate
/// refits the full three-pass estimator. Returns per-tau, per-regressor
/// sample standard deviations over the replicates that fit successfully;
/// more than half failing is an error.
pub fn mmqr_bootstrap_se(
    x: &DMatrix<f64>,
    y: &[f64],
    clusters: &[AssetId],
    taus: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if clusters.len() != x.nrows() {
        return Err(Error::Validation("cluster labels must cover every row".into()));
    }
    if n_draws < 2 {
        return Err(Error::Validation("bootstrap needs at least 2 draws".into()));
    }
    let mut rows_by_cluster: BTreeMap<&AssetId, Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        rows_by_cluster.entry(c).or_default().push(i);
    }
    let groups: Vec<&Vec<usize>> = rows_by_cluster.values().collect();
    let g = groups.len();

    let replicates: Vec<Option<Vec<Vec<f64>>>> = (0..n_draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed, d));
            let mut rows: Vec<usize> = Vec::with_capacity(x.nrows());
            for _ in 0..g {
                rows.extend_from_slice(groups[rng.gen_range(0..g)]);
            }
            let xb = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            mmqr_fit(&xb, &yb, taus).ok().map(|f| f.coefficients)
        })
        .collect();

    let ok: Vec<&Vec<Vec<f64>>> = replicates.iter().flatten().collect();
    if ok.len() < (n_draws + 1) / 2 || ok.len() < 2 {
        return Err(Error::Validation(format!(
            "bootstrap degenerate: only {} of {n_draws} replicates fit",
            ok.len()
        )));
    }
    let p = x.ncols();
    let mut se = vec![vec![0.0; p]; taus.len()];
    for (t, row) in se.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|c| c[t][j]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            *cell = var.sqrt();
        }
    }
    Ok(se)
}

/// The emission transform applied before the CSV stage: log(1 + total
/// emission / total assets). Exposed so data producers and consumers
/// agree on the convention.
pub fn standardized_emission(total_emission: f64, total_assets: f64) -> f64 {
    (1.0 + total_emission / total_assets).ln()
}

/// Numeric covariates in design order (after intercept and before the
/// sector dummies).
const COVARIATE_NAMES: [&str; 13] = [
    "esg_score",
    "green_revenues",
    "std_total_emission",
    "target_reduction",
    "board_diversity",
    "human_policy_rights",
    "armaments",
    "esg_controversies",
    "size",
    "pb_ratio",
    "roe",
    "pe_ratio",
    "dividend_yield",
];

/// A ready-to-fit regression panel.
#[derive(Clone, Debug)]
pub struct RegressionPanel {
    /// Dependent variable: SMIS in percent at quarter Q.
    pub y: Vec<f64>,
    /// Design matrix: intercept, covariates, sector dummies; regressors
    /// taken from the year of quarter Q-1.
    pub x: DMatrix<f64>,
    /// Column names of `x`.
    pub names: Vec<String>,
    /// Row keys (asset, dependent quarter).
    pub keys: Vec<(AssetId, Quarter)>,
    /// Dropped-row counts keyed by the first missing field.
    pub dropped: BTreeMap<String, usize>,
    /// Sector absorbed into the intercept, if sectors were present.
    pub reference_sector: Option<String>,
}

/// Builds the regression panel from scored quarters and the ESG table
/// keyed by (asset, year) (see [`crate::data_model::esg_by_year`]).
///
/// The dependent variable is SMIS x 100 at quarter Q; every regressor
/// comes from the annual record broadcast to quarter Q-1, i.e. the year
/// of Q-1. Rows missing the record, the sector, or any covariate are
/// dropped and counted under the first missing field.
pub fn build_regression_panel(
    esg: &BTreeMap<(AssetId, i32), EsgRecord>,
    scores: &ScoreTable,
) -> Result<RegressionPanel> {
    struct Pending {
        key: (AssetId, Quarter),
        y: f64,
        covariates: Vec<f64>,
        sector: String,
    }

    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    let mut pending: Vec<Pending> = Vec::new();
    for row in &scores.rows {
        let asset = &row.smis.asset_id;
        let quarter = row.smis.quarter;
        let lag_year = quarter.prev().year;
        let Some(rec) = esg.get(&(asset.clone(), lag_year)) else {
            *dropped.entry("missing_esg_record".into()).or_insert(0) += 1;
            continue;
        };
        let values = [
            Some(rec.esg_score),
            rec.green_revenues,
            rec.std_total_emission,
            rec.target_reduction.map(f64::from),
            rec.board_diversity,
            rec.human_policy_rights.map(f64::from),
            rec.armaments.map(f64::from),
            rec.esg_controversies,
            rec.size,
            rec.pb_ratio,
            rec.roe,
            rec.pe_ratio,
            rec.dividend_yield,
        ];
        let missing = values.iter().position(|v| v.is_none());
        if let Some(i) = missing {
            *dropped.entry(format!("missing_{}", COVARIATE_NAMES[i])).or_insert(0) += 1;
            continue;
        }
        let Some(sector) = rec.gics_sector.clone() else {
            *dropped.entry("missing_gics_sector".into()).or_insert(0) += 1;
            continue;
        };
        pending.push(Pending {
            key: (asset.clone(), quarter),
            y: row.smis.smis * 100.0,
            covariates: values.iter().map(|v| v.expect("checked above")).collect(),
            sector,
        });
    }
    if pending.is_empty() {
        return Err(Error::Validation("regression panel has no complete rows".into()));
    }

    let sectors: Vec<String> = {
        let set: std::collections::BTreeSet<&String> = pending.iter().map(|p| &p.sector).collect();
        set.into_iter().cloned().collect()
    };
    let (reference_sector, dummy_sectors) = match sectors.split_first() {
        Some((first, rest)) if !rest.is_empty() => (Some(first.clone()), rest.to_vec()),
        _ => (None, Vec::new()),
    };

    let p = 1 + COVARIATE_NAMES.len() + dummy_sectors.len();
    let n = pending.len();
    let mut names = Vec::with_capacity(p);
    names.push("intercept".to_string());
    names.extend(COVARIATE_NAMES.iter().map(|s| s.to_string()));
    names.extend(dummy_sectors.iter().map(|s| format!("sector_{s}")));

    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    for (i, row) in pending.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in row.covariates.iter().enumerate() {
            x[(i, 1 + j)] = *v;
        }
        if let Some(d) = dummy_sectors.iter().position(|s| *s == row.sector) {
            x[(i, 1 + COVARIATE_NAMES.len() + d)] = 1.0;
        }
        y.push(row.y);
        keys.push(row.key.clone());
    }
    Ok(RegressionPanel { y, x, names, keys, dropped, reference_sector })
}

/// Writes the fit as CSV: one row per regressor, one coefficient column
/// per tau, plus matching standard-error columns when provided.
pub fn write_regression_csv(
    names: &[String],
    fit: &MmqrFit,
    se: Option<&[Vec<f64>]>,
    path: &Path,
) -> Result<()> {
    if names.len() != fit.location_beta.len() {
        return Err(Error::Validation("name list does not match coefficient width".into()));
    }
    if let Some(se) = se {
        if se.len() != fit.taus.len() || se.iter().any(|r| r.len() != names.len()) {
            return Err(Error::Validation("standard-error shape does not match the fit".into()));
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "regressor")?;
    for t in &fit.taus {
        write!(f, ",tau_{t}")?;
    }
    if se.is_some() {
        for t in &fit.taus {
            write!(f, ",se_{t}")?;
        }
    }
    writeln!(f)?;
    for (j, name) in names.iter().enumerate() {
        write!(f, "{name}")?;
        for row in &fit.coefficients {
            write!(f, ",{}", row[j])?;
        }
        if let Some(se) = se {
            for row in se {
                write!(f, ",{}", row[j])?;
            }
        }
        writeln!(f)?;
    }
    Ok(())
}
