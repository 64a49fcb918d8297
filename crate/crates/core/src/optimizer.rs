//! Constrained portfolio construction under four objectives: minimum
//! variance, minimum CVaR, minimum expectile VaR, and maximum Sharpe.
//!
//! All four problems share the constraint block: full investment
//! (weights sum to 1), per-asset box bounds, and an optional floor on
//! the in-sample mean return. Scenario returns enter with uniform
//! probability 1/T. Every problem is assembled as a conic program
//! (linear or convex quadratic) and handed to one interior-point kernel;
//! the CVaR and expectile-VaR objectives use exact epigraph LPs, so the
//! reported optimum matches the discrete risk functionals in
//! `risk_analytics` up to solver tolerance.

use std::collections::{BTreeMap, BTreeSet};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::data_model::AssetId;
use crate::error::{Error, Result};
use crate::risk_analytics::tail_count;

/// A panel of T return scenarios over n assets, equally weighted.
#[derive(Clone, Debug)]
pub struct ScenarioSet {
    rows: Vec<f64>,
    t: usize,
    n: usize,
    asset_ids: Vec<AssetId>,
}

impl ScenarioSet {
    /// Builds a scenario set from row vectors (one row per scenario).
    ///
    /// Requires T >= 2, n >= 1, rectangular finite rows, and distinct
    /// asset ids matching the row width.
    pub fn new(rows: Vec<Vec<f64>>, asset_ids: Vec<AssetId>) -> Result<Self> {
        let t = rows.len();
        let n = asset_ids.len();
        if t < 2 {
            return Err(Error::Validation(format!("scenario set needs T >= 2, got {t}")));
        }
        if n == 0 {
            return Err(Error::Validation("scenario set needs at least one asset".into()));
        }
        let distinct: BTreeSet<&AssetId> = asset_ids.iter().collect();
        if distinct.len() != n {
            return Err(Error::Validation("scenario set asset ids must be distinct".into()));
        }
        let mut flat = Vec::with_capacity(t * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation(format!(
                    "scenario row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("scenario row {i} has non-finite entries")));
            }
            flat.extend_from_slice(row);
        }
        Ok(ScenarioSet { rows: flat, t, n, asset_ids })
    }

    /// Number of scenarios.
    pub fn t_len(&self) -> usize {
        self.t
    }

    /// Number of assets.
    pub fn n_assets(&self) -> usize {
        self.n
    }

    /// Asset ids in column order.
    pub fn asset_ids(&self) -> &[AssetId] {
        &self.asset_ids
    }

    /// One scenario's returns.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t * self.n..(t + 1) * self.n]
    }

    /// Portfolio returns r_t' w for each scenario.
    pub fn portfolio_returns(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.n, "weight vector width mismatch");
        (0..self.t)
            .map(|t| self.row(t).iter().zip(weights).map(|(r, w)| r * w).sum())
            .collect()
    }
}

/// Per-asset box bounds on portfolio weights.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSpec {
    /// Lower bounds, one per asset.
    pub lb: Vec<f64>,
    /// Upper bounds, one per asset.
    pub ub: Vec<f64>,
}

impl BoundSpec {
    /// Builds bounds, enforcing 0 <= lb_i <= ub_i <= 1 elementwise.
    ///
    /// Aggregate feasibility (sum of lower bounds vs the budget) is left
    /// to the solvers, which report such instances as Infeasible.
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(Error::Validation("bound vectors must have equal length".into()));
        }
        for (i, (&l, &u)) in lb.iter().zip(&ub).enumerate() {
            if !(l.is_finite() && u.is_finite() && 0.0 <= l && l <= u && u <= 1.0) {
                return Err(Error::Validation(format!(
                    "bounds for asset {i} violate 0 <= lb <= ub <= 1: lb={l}, ub={u}"
                )));
            }
        }
        Ok(BoundSpec { lb, ub })
    }

    /// Fully slack bounds [0, 1] for n assets.
    pub fn slack(n: usize) -> Self {
        BoundSpec { lb: vec![0.0; n], ub: vec![1.0; n] }
    }

    /// Number of assets covered.
    pub fn len(&self) -> usize {
        self.lb.len()
    }

    /// True when no assets are covered.
    pub fn is_empty(&self) -> bool {
        self.lb.is_empty()
    }
}

/// Tilt bounds: over-weighted assets may not fall below their benchmark
/// weight, under-weighted assets may not rise above it, everything else
/// is free in [0, 1].
pub fn bounds_from_sets(
    benchmark: &BTreeMap<AssetId, f64>,
    asset_order: &[AssetId],
    over: &BTreeSet<AssetId>,
    under: &BTreeSet<AssetId>,
) -> Result<BoundSpec> {
    if let Some(a) = over.intersection(under).next() {
        return Err(Error::OverlappingSelection(format!("asset {a} on both sides")));
    }
    let mut lb = vec![0.0; asset_order.len()];
    let mut ub = vec![1.0; asset_order.len()];
    for (i, a) in asset_order.iter().enumerate() {
        let in_over = over.contains(a);
        let in_under = under.contains(a);
        if in_over || in_under {
            let w = *benchmark.get(a).ok_or_else(|| {
                Error::Validation(format!("selected asset {a} has no benchmark weight"))
            })?;
            if in_over {
                lb[i] = w;
            } else {
                ub[i] = w;
            }
        }
    }
    for a in over.iter().chain(under) {
        if !asset_order.contains(a) {
            return Err(Error::Validation(format!("selected asset {a} not in the universe")));
        }
    }
    BoundSpec::new(lb, ub)
}

/// Terminal state of one solve.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub enum SolveStatus {
    /// Converged to tolerance.
    Optimal,
    /// Constraints proven inconsistent.
    Infeasible,
    /// Stopped early; weights hold the best incumbent if one exists.
    MaxIter,
}

/// Result of one allocation problem.
#[derive(Clone, Debug)]
pub struct OptimalPortfolio {
    /// Weights in scenario asset order. Empty unless the solve produced
    /// an incumbent (always populated for Optimal).
    pub weights: Vec<f64>,
    /// The solver's objective at the returned point: portfolio variance,
    /// CVaR, expectile VaR, or Sharpe ratio depending on the problem.
    /// NaN when no incumbent exists.
    pub objective_value: f64,
    /// Terminal status.
    pub status: SolveStatus,
}

/// Scenario sample moments with PSD repair applied to the covariance.
#[derive(Clone, Debug)]
pub struct Moments {
    /// Arithmetic mean return per asset.
    pub mean: Vec<f64>,
    /// Sample covariance (ddof = 1), eigenvalue-clipped to PSD.
    pub cov: DMatrix<f64>,
    /// Number of negative eigenvalues clipped during repair.
    pub clipped_eigenvalues: usize,
}

/// Per-asset arithmetic mean of the scenario returns.
pub fn mean_vector(scenarios: &ScenarioSet) -> Vec<f64> {
    let t = scenarios.t_len();
    let n = scenarios.n_assets();
    let mut mean = vec![0.0; n];
    for ti in 0..t {
        for (m, r) in mean.iter_mut().zip(scenarios.row(ti)) {
            *m += r;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    mean
}

/// Computes mean vector and ddof-1 sample covariance, clipping any
/// negative eigenvalues to zero so downstream QPs stay convex.
pub fn sample_moments(scenarios: &ScenarioSet) -> Moments {
    let t = scenarios.t_len();
    let n = scenarios.n_assets();
    let mean = mean_vector(scenarios);
    let mut cov = DMatrix::zeros(n, n);
    for ti in 0..t {
        let row = scenarios.row(ti);
        let d = DVector::from_iterator(n, row.iter().zip(&mean).map(|(r, m)| r - m));
        cov += &d * d.transpose();
    }
    cov /= (t - 1) as f64;

    let eig = cov.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if clipped > 0 {
        let mut vals = eig.eigenvalues.clone();
        for v in vals.iter_mut() {
            *v = v.max(0.0);
        }
        cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        // symmetrize away reconstruction round-off
        cov = (&cov + cov.transpose()) * 0.5;
    }
    Moments { mean, cov, clipped_eigenvalues: clipped }
}

/// Incremental conic-program builder in the solver's canonical form
/// Ax + s = b, with equality rows first, then <= rows.
struct ConicProgram {
    n_var: usize,
    q: Vec<f64>,
    p_triplets: Vec<(usize, usize, f64)>,
    a_triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    n_eq: usize,
    ineq_started: bool,
}

impl ConicProgram {
    fn new(n_var: usize) -> Self {
        ConicProgram {
            n_var,
            q: vec![0.0; n_var],
            p_triplets: Vec::new(),
            a_triplets: Vec::new(),
            b: Vec::new(),
            n_eq: 0,
            ineq_started: false,
        }
    }

    /// Adds 2*factor*cov to the quadratic term so the solver's 0.5 x'Px
    /// evaluates to factor * x'(cov)x over the first cov.nrows() vars.
    fn add_quadratic(&mut self, cov: &DMatrix<f64>, factor: f64) {
        for j in 0..cov.ncols() {
            for i in 0..cov.nrows() {
                let v = 2.0 * factor * cov[(i, j)];
                if v != 0.0 {
                    self.p_triplets.push((i, j, v));
                }
            }
        }
    }

    fn linear(&mut self, var: usize, coeff: f64) {
        self.q[var] = coeff;
    }

    /// Adds coeffs . x = rhs. All equality rows must precede <= rows.
    fn eq_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        assert!(!self.ineq_started, "equality rows must come before inequality rows");
        let r = self.b.len();
        for &(c, v) in coeffs {
            self.a_triplets.push((r, c, v));
        }
        self.b.push(rhs);
        self.n_eq += 1;
    }

    /// Adds coeffs . x <= rhs.
    fn le_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        self.ineq_started = true;
        let r = self.b.len();
        for &(c, v) in coeffs {
            self.a_triplets.push((r, c, v));
        }
        self.b.push(rhs);
    }

    fn to_csc(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
        trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; n_cols + 1];
        let mut rowval: Vec<usize> = Vec::with_capacity(trip.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((c, r)) {
                *nzval.last_mut().expect("entry exists when last is set") += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                last = Some((c, r));
            }
            colptr[c + 1] = rowval.len();
        }
        // forward-fill pointers over empty columns
        for c in 1..=n_cols {
            colptr[c] = colptr[c].max(colptr[c - 1]);
        }
        CscMatrix::new(n_rows, n_cols, colptr, rowval, nzval)
    }

    /// Runs the interior-point kernel, returning (status, x, objective).
    fn solve(self) -> (SolverStatus, Vec<f64>, f64) {
        let n_rows = self.b.len();
        let n_ineq = n_rows - self.n_eq;
        let p = Self::to_csc(self.n_var, self.n_var, self.p_triplets);
        let a = Self::to_csc(n_rows, self.n_var, self.a_triplets);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if self.n_eq > 0 {
            cones.push(ZeroConeT(self.n_eq));
        }
        if n_ineq > 0 {
            cones.push(NonnegativeConeT(n_ineq));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .tol_feas(1e-10)
            .tol_gap_abs(1e-10)
            .tol_gap_rel(1e-10)
            .build()
            .expect("static solver settings are valid");
        let mut solver = DefaultSolver::new(&p, &self.q, &a, &self.b, &cones, settings);
        solver.solve();
        (solver.solution.status, solver.solution.x.clone(), solver.solution.obj_val)
    }
}

fn map_status(raw: SolverStatus) -> SolveStatus {
    match raw {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::MaxIter,
    }
}

/// Clamps weights into their bounds and spreads the residual budget over
/// assets with slack, shrinking constraint violations from solver
/// round-off (1e-10 scale) to well below 1e-8 without moving the point
/// materially.
fn polish_budget(weights: &mut [f64], bounds: &BoundSpec) {
    for _ in 0..32 {
        for ((w, &l), &u) in weights.iter_mut().zip(&bounds.lb).zip(&bounds.ub) {
            *w = w.clamp(l, u);
        }
        let deficit = 1.0 - weights.iter().sum::<f64>();
        if deficit.abs() <= 1e-14 {
            return;
        }
        let slack: Vec<usize> = (0..weights.len())
            .filter(|&i| {
                if deficit > 0.0 {
                    weights[i] < bounds.ub[i]
                } else {
                    weights[i] > bounds.lb[i]
                }
            })
            .collect();
        if slack.is_empty() {
            return;
        }
        let share = deficit / slack.len() as f64;
        for i in slack {
            weights[i] += share;
        }
    }
}

fn finish(
    raw: SolverStatus,
    x: Vec<f64>,
    obj: f64,
    n: usize,
    bounds: &BoundSpec,
    objective: impl FnOnce(f64) -> f64,
) -> OptimalPortfolio {
    let status = map_status(raw);
    let have_incumbent = x.len() >= n
        && x.iter().take(n).all(|v| v.is_finite())
        && !matches!(status, SolveStatus::Infeasible);
    if !have_incumbent {
        return OptimalPortfolio { weights: Vec::new(), objective_value: f64::NAN, status };
    }
    let mut weights = x[..n].to_vec();
    polish_budget(&mut weights, bounds);
    OptimalPortfolio { weights, objective_value: objective(obj), status }
}

fn check_problem(scenarios: &ScenarioSet, bounds: &BoundSpec) -> Result<()> {
    if bounds.len() != scenarios.n_assets() {
        return Err(Error::Validation(format!(
            "bounds cover {} assets, scenarios have {}",
            bounds.len(),
            scenarios.n_assets()
        )));
    }
    Ok(())
}

/// Adds the shared constraint block: budget equality first (callers must
/// not have added inequality rows yet), then the optional mean floor and
/// the box bounds.
fn common_constraints(
    prog: &mut ConicProgram,
    n: usize,
    mean: &[f64],
    bounds: &BoundSpec,
    mean_floor: Option<f64>,
) {
    let budget: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
    prog.eq_row(&budget, 1.0);
    if let Some(floor) = mean_floor {
        let row: Vec<(usize, f64)> = (0..n).map(|i| (i, -mean[i])).collect();
        prog.le_row(&row, -floor);
    }
    for i in 0..n {
        prog.le_row(&[(i, 1.0)], bounds.ub[i]);
        prog.le_row(&[(i, -1.0)], -bounds.lb[i]);
    }
}

/// Minimizes portfolio variance w' cov w under the common constraints.
/// The objective value is the variance at the optimum.
pub fn min_variance(
    scenarios: &ScenarioSet,
    bounds: &BoundSpec,
    mean_floor: Option<f64>,
) -> Result<OptimalPortfolio> {
    let moments = sample_moments(scenarios);
    min_variance_with(scenarios, &moments, bounds, mean_floor)
}

/// [`min_variance`] with precomputed moments, so callers solving many
/// problems on one scenario set pay for the covariance repair once.
pub fn min_variance_with(
    scenarios: &ScenarioSet,
    moments: &Moments,
    bounds: &BoundSpec,
    mean_floor: Option<f64>,
) -> Result<OptimalPortfolio> {
    check_problem(scenarios, bounds)?;
    let n = scenarios.n_assets();
    let mut prog = ConicProgram::new(n);
    prog.add_quadratic(&moments.cov, 1.0);
    common_constraints(&mut prog, n, &moments.mean, bounds, mean_floor);
    let (raw, x, obj) = prog.solve();
    Ok(finish(raw, x, obj, n, bounds, |o| o))
}

/// Minimizes CVaR at the given confidence level via the epigraph LP
///
///   min  zeta + (1/m) sum_t u_t
///   s.t. u_t >= -r_t'w - zeta,  u_t >= 0,  common constraints,
///
/// with m the discrete tail count, so the optimum equals the tail mean
/// of the optimal portfolio's worst m scenarios.
pub fn min_cvar(
    scenarios: &ScenarioSet,
    bounds: &BoundSpec,
    mean_floor: Option<f64>,
    alpha: f64,
) -> Result<OptimalPortfolio> {
    check_problem(scenarios, bounds)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha must be in [0, 1), got {alpha}")));
    }
    let n = scenarios.n_assets();
    let t = scenarios.t_len();
    let m = tail_count(alpha, t);
    // variables: w_0..w_{n-1}, zeta, u_0..u_{T-1}
    let zeta = n;
    let u0 = n + 1;
    let mean = mean_vector(scenarios);
    let mut prog = ConicProgram::new(n + 1 + t);
    prog.linear(zeta, 1.0);
    for ti in 0..t {
        prog.linear(u0 + ti, 1.0 / m as f64);
    }
    common_constraints(&mut prog, n, &mean, bounds, mean_floor);
    for ti in 0..t {
        let mut row: Vec<(usize, f64)> =
            scenarios.row(ti).iter().enumerate().map(|(i, &r)| (i, -r)).collect();
        row.push((zeta, -1.0));
        row.push((u0 + ti, -1.0));
        prog.le_row(&row, 0.0);
        prog.le_row(&[(u0 + ti, -1.0)], 0.0);
    }
    let (raw, x, obj) = prog.solve();
    Ok(finish(raw, x, obj, n, bounds, |o| o))
}

/// Minimizes expectile VaR at the given level via an exact epigraph LP.
///
/// With tau = 1 - alpha, lambda >= -expectile_tau(r'w) is equivalent to
/// tau * sum(r_t'w + lambda)_+ >= (1-tau) * sum(-lambda - r_t'w)_+, which
/// rewrites (splitting the positive part) into the linear system
///
///   sum_t r_t'w + T*lambda >= c * sum_t b_t,  c = (1 - 2 tau) / tau,
///   b_t >= -r_t'w - lambda,  b_t >= 0.
///
/// The b_t over-estimate the hinge terms; since c >= 0 the aggregate
/// constraint only tightens, so the LP minimum equals the true one.
/// Requires alpha >= 0.5 (tau <= 1/2 keeps c nonnegative).
pub fn min_evar(
    scenarios: &ScenarioSet,
    bounds: &BoundSpec,
    mean_floor: Option<f64>,
    alpha: f64,
) -> Result<OptimalPortfolio> {
    check_problem(scenarios, bounds)?;
    if !(0.5..1.0).contains(&alpha) {
        return Err(Error::Validation(format!(
            "expectile-VaR optimization needs alpha in [0.5, 1), got {alpha}"
        )));
    }
    let n = scenarios.n_assets();
    let t = scenarios.t_len();
    let tau = 1.0 - alpha;
    let c = (1.0 - 2.0 * tau) / tau;
    // variables: w_0..w_{n-1}, lambda, b_0..b_{T-1}
    let lambda = n;
    let b0 = n + 1;
    let mean = mean_vector(scenarios);
    let mut prog = ConicProgram::new(n + 1 + t);
    prog.linear(lambda, 1.0);
    common_constraints(&mut prog, n, &mean, bounds, mean_floor);
    for ti in 0..t {
        let mut row: Vec<(usize, f64)> =
            scenarios.row(ti).iter().enumerate().map(|(i, &r)| (i, -r)).collect();
        row.push((lambda, -1.0));
        row.push((b0 + ti, -1.0));
        prog.le_row(&row, 0.0);
        prog.le_row(&[(b0 + ti, -1.0)], 0.0);
    }
    // c * sum b_t - sum_t r_t'w - T*lambda <= 0
    let mut agg: Vec<(usize, f64)> = (0..n).map(|i| (i, -(mean[i] * t as f64))).collect();
    agg.push((lambda, -(t as f64)));
    for ti in 0..t {
        agg.push((b0 + ti, c));
    }
    prog.le_row(&agg, 0.0);
    let (raw, x, obj) = prog.solve();
    Ok(finish(raw, x, obj, n, bounds, |o| o))
}

/// Maximizes the Sharpe ratio (mean - rf) / stdev via the homogenized QP
///
///   min  x' cov x
///   s.t. (mean - rf 1)'x = 1,  1'x = y,  y*lb <= x <= y*ub,  y >= 0,
///
/// recovering w = x / y. Errors with AssumptionViolated when no feasible
/// portfolio has mean return above rf (the ratio is then undefined).
pub fn max_sharpe(
    scenarios: &ScenarioSet,
    bounds: &BoundSpec,
    risk_free: f64,
) -> Result<OptimalPortfolio> {
    let moments = sample_moments(scenarios);
    max_sharpe_with(scenarios, &moments, bounds, risk_free)
}

/// [`max_sharpe`] with precomputed moments; see [`min_variance_with`].
pub fn max_sharpe_with(
    scenarios: &ScenarioSet,
    moments: &Moments,
    bounds: &BoundSpec,
    risk_free: f64,
) -> Result<OptimalPortfolio> {
    check_problem(scenarios, bounds)?;
    if !risk_free.is_finite() {
        return Err(Error::Validation("risk-free rate must be finite".into()));
    }
    let n = scenarios.n_assets();
    let excess: Vec<f64> = moments.mean.iter().map(|m| m - risk_free).collect();

    // Stage 1: certify max feasible excess mean is strictly positive.
    let mut pre = ConicProgram::new(n);
    for i in 0..n {
        pre.linear(i, -excess[i]);
    }
    common_constraints(&mut pre, n, &moments.mean, bounds, None);
    let (pre_raw, _, pre_obj) = pre.solve();
    match map_status(pre_raw) {
        SolveStatus::Optimal => {
            if -pre_obj <= 1e-10 {
                return Err(Error::AssumptionViolated(format!(
                    "no feasible portfolio exceeds the risk-free rate {risk_free}"
                )));
            }
        }
        status => {
            return Ok(OptimalPortfolio {
                weights: Vec::new(),
                objective_value: f64::NAN,
                status,
            })
        }
    }

    // Stage 2: homogenized QP over (x, y).
    let y = n;
    let mut prog = ConicProgram::new(n + 1);
    prog.add_quadratic(&moments.cov, 1.0);
    let excess_row: Vec<(usize, f64)> = (0..n).map(|i| (i, excess[i])).collect();
    prog.eq_row(&excess_row, 1.0);
    let mut budget_row: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
    budget_row.push((y, -1.0));
    prog.eq_row(&budget_row, 0.0);
    for i in 0..n {
        prog.le_row(&[(i, 1.0), (y, -bounds.ub[i])], 0.0);
        prog.le_row(&[(i, -1.0), (y, bounds.lb[i])], 0.0);
    }
    prog.le_row(&[(y, -1.0)], 0.0);
    let (raw, x, obj) = prog.solve();
    let status = map_status(raw);
    if status != SolveStatus::Optimal {
        return Ok(OptimalPortfolio { weights: Vec::new(), objective_value: f64::NAN, status });
    }
    let scale = x[y];
    if !(scale.is_finite() && scale > 1e-10) {
        return Err(Error::AssumptionViolated(
            "homogenized Sharpe program collapsed (scale variable near zero)".into(),
        ));
    }
    let mut weights: Vec<f64> = x[..n].iter().map(|v| v / scale).collect();
    polish_budget(&mut weights, bounds);
    // obj = x' cov x and (mean - rf)'x = 1, so Sharpe = 1 / sqrt(obj).
    let sharpe = if obj <= 0.0 { f64::INFINITY } else { 1.0 / obj.sqrt() };
    Ok(OptimalPortfolio { weights, objective_value: sharpe, status })
}
