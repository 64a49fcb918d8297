//! Error type shared by every module in the crate.

use crate::data_model::Quarter;

/// Errors produced by data ingestion, scoring, selection, optimization,
/// backtesting, and regression.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A CSV file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        /// Path of the offending file.
        path: String,
        /// 1-based line number (0 when unknown).
        line: u64,
        /// What went wrong.
        msg: String,
    },

    /// A record violated a structural invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// A fund group needed for scoring has no members in the quarter.
    #[error("no {group} funds with a snapshot in {quarter}")]
    EmptyGroup {
        /// Human-readable group name ("Art9" or "Art6/8").
        group: &'static str,
        /// The quarter in question.
        quarter: Quarter,
    },

    /// A significance test is undefined for the given inputs
    /// (pooled proportion 0 or 1, or zero pooled variance).
    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    /// Too few degrees of freedom for a t-test.
    #[error("degrees of freedom {dof} < 1 (n1={n1}, n2={n2})")]
    DegreesOfFreedom {
        /// n1 + n2 - 2.
        dof: i64,
        /// First group size.
        n1: usize,
        /// Second group size.
        n2: usize,
    },

    /// Fewer scored assets than a selection needs.
    #[error("insufficient universe: need {needed} scored assets, have {available}")]
    InsufficientUniverse {
        /// Minimum universe size (2k).
        needed: usize,
        /// Assets actually available.
        available: usize,
    },

    /// No probability grid point reaches the requested corner count.
    #[error("infeasible corner: requested {requested}, max achievable {max_achievable}")]
    InfeasibleCorner {
        /// Requested per-side count k.
        requested: usize,
        /// Largest corner population over the whole grid.
        max_achievable: usize,
    },

    /// Over- and under-weight sides of a selection intersect.
    #[error("selection sides overlap: {0}")]
    OverlappingSelection(String),

    /// A quarter has no eligible assets.
    #[error("empty eligible universe for {quarter}")]
    EmptyUniverse {
        /// The quarter in question.
        quarter: Quarter,
    },

    /// Design matrix is rank deficient.
    #[error("rank deficient design matrix: {0}")]
    RankDeficient(String),

    /// More than 5% of fitted scales needed clipping in an MMQR fit.
    #[error("degenerate scale regression: {clipped} of {total} fitted scales clipped")]
    ScaleDegenerate {
        /// Observations whose fitted scale was at or below zero.
        clipped: usize,
        /// Total observations.
        total: usize,
    },

    /// The max-Sharpe assumption (some feasible portfolio beats the
    /// risk-free rate) does not hold.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// A numerical solver failed in a way that is not plain infeasibility.
    #[error("solver: {0}")]
    Solver(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV layer failure not tied to a specific record.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
