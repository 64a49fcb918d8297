//! Market-implied sustainability scoring and portfolio tilting.
//!
//! The crate computes SMIS scores (holding-propensity gaps between SFDR
//! Article 9 funds and Article 6/8 funds), selects over/under-weight
//! baskets from joint (ESG, SMIS) cross-sections, backtests fixed and
//! risk-optimized tilts against a benchmark, validates strategies against
//! randomized controls, and fits location-scale quantile regressions of
//! scores on firm fundamentals. A synthetic data generator with planted,
//! recoverable effects makes every stage testable end to end.

pub mod backtest;
pub mod data_model;
pub mod econometrics;
pub mod error;
pub mod optimizer;
pub mod risk_analytics;
pub mod scoring;
pub mod selection;
pub mod synth;

pub(crate) mod seeding;

#[doc(hidden)]
pub mod testutil;

pub use backtest::{
    prepare_backtest, random_validation, run_backtest, BacktestConfig, BacktestReport, Engine,
    PreparedBacktest,
};
pub use data_model::{
    align_dataset, esg_by_year, impute_single_gaps, load_esg, load_panel, load_prices, AlignedDataset,
    AlignmentSpec, AssetId, EsgRecord, FundId, FundMeta, HoldingsPanel, HoldingsSnapshot,
    PriceSeries, Quarter, SfdrLabel, TradingCalendar,
};
pub use error::{Error, Result};
pub use optimizer::{BoundSpec, OptimalPortfolio, ScenarioSet, SolveStatus};
pub use risk_analytics::{MetricPanel, QuarterSegment, ReturnSeries, WeightSeries};
pub use scoring::{ScoreRow, ScoreTable, SmisScore, SmiswScore};
pub use selection::{CrossSection, SelectionResult, StrategyKind, StrategySpec};
