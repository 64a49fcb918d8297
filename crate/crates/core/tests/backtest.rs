//! Backtest engine tests on generated datasets: benchmark identity,
//! normalization, determinism, information barriers, skip handling, and
//! the on-disk report formats.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use smislab_core::backtest::{
    prepare_backtest, random_validation, run_backtest, tilt_weights, write_diagnostics_jsonl,
    write_report_csv, write_weights_csv, BacktestConfig, Engine, DIAG_QUARTER_DROPPED,
    DIAG_SELECTION_SKIPPED, DIAG_SOLVER_FALLBACK,
};
use smislab_core::data_model::{PriceSeries, Quarter};
use smislab_core::error::Error;
use smislab_core::risk_analytics::METRIC_NAMES;
use smislab_core::selection::{SelectionResult, StrategyKind, StrategySpec};
use smislab_core::synth::{generate, SynthConfig, SynthOutput};
use smislab_core::{align_dataset, AlignedDataset, AlignmentSpec};

fn small_synth() -> SynthOutput {
    let config = SynthConfig {
        n_assets: 80,
        n_art9: 8,
        n_art8: 24,
        n_art6: 8,
        n_quarters: 12,
        ..SynthConfig::default()
    };
    generate(&config).unwrap()
}

fn small_dataset(lookback_days: usize) -> (AlignedDataset, BTreeMap<String, f64>) {
    let out = small_synth();
    let shares = out.truth.shares.clone();
    let dataset =
        align_dataset(out.panel, out.prices, out.esg, AlignmentSpec { lookback_days }).unwrap();
    (dataset, shares)
}

fn small_config(engine: Engine, overlay: f64, calibration_days: usize) -> BacktestConfig {
    let strategy = StrategySpec::new(StrategyKind::TopSmis, 5, None).unwrap();
    let mut config = BacktestConfig::new(strategy, engine);
    config.end = NaiveDate::from_ymd_opt(2012, 12, 31).unwrap();
    config.overlay = overlay;
    config.calibration_days = calibration_days;
    config.benchmark_size = 40;
    config.n_random = 20;
    config
}

#[test]
fn tilt_matches_arithmetic_fixture() {
    let ids: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
    let w = vec![0.25; 4];
    let sel = SelectionResult::new(
        BTreeSet::from(["A".to_string()]),
        BTreeSet::from(["B".to_string()]),
        1,
    )
    .unwrap();
    let (tids, tw) = tilt_weights(&ids, &w, &sel, 0.10, 1).unwrap();
    assert_eq!(tids, ids);
    for (got, want) in tw.iter().zip([0.35, 0.15, 0.25, 0.25]) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn zero_overlay_reproduces_benchmark_bitwise() {
    let (dataset, shares) = small_dataset(0);
    let config = small_config(Engine::FixedTilt, 0.0, 2);
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    assert!(prepared.diagnostics().is_empty());
    let strat = prepared.run(Some(&config.strategy)).unwrap();
    let bench = prepared.run(None).unwrap();
    assert_eq!(strat.returns.dates, bench.returns.dates);
    assert_eq!(strat.returns.values.len(), bench.returns.values.len());
    for (a, b) in strat.returns.values.iter().zip(&bench.returns.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(strat.panel, bench.panel);
}

#[test]
fn fixed_tilt_runs_and_weights_stay_normalized() {
    let (dataset, shares) = small_dataset(0);
    let config = small_config(Engine::FixedTilt, 0.10, 2);
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    let out = prepared.run(Some(&config.strategy)).unwrap();
    assert!(out.diagnostics.is_empty(), "{:?}", out.diagnostics);
    assert_eq!(out.quarters.len(), 11);
    for seg in &out.weights.segments {
        let s: f64 = seg.target.iter().sum();
        assert!((s - 1.0).abs() < 1e-12, "target sum {s}");
        for day in &seg.daily {
            let s: f64 = day.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "drifted sum {s}");
        }
    }
    let bench = prepared.run(None).unwrap();
    assert_ne!(out.returns.values, bench.returns.values);
    assert!(out.panel.mean_ann.is_finite());

    let validation = random_validation(&prepared, &out.panel).unwrap();
    assert!(validation.warnings.is_empty());
    let metrics = validation.metrics.unwrap();
    assert_eq!(metrics.len(), 11);
    for ci in &metrics {
        assert!(ci.lo <= ci.hi, "{} lo {} > hi {}", ci.name, ci.lo, ci.hi);
    }
}

#[test]
fn cvar_engine_runs_with_fallbacks_logged() {
    let (dataset, shares) = small_dataset(60);
    let config = small_config(Engine::OptCvar, 0.10, 60);
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    let out = prepared.run(Some(&config.strategy)).unwrap();
    assert!(!out.quarters.is_empty());
    for seg in &out.weights.segments {
        let s: f64 = seg.target.iter().sum();
        assert!((s - 1.0).abs() < 1e-8, "target sum {s}");
    }
    for d in &out.diagnostics {
        assert_eq!(d.kind, DIAG_SOLVER_FALLBACK, "unexpected diagnostic {d:?}");
    }
}

#[test]
fn determinism_across_repeated_runs() {
    let (dataset, shares) = small_dataset(0);
    let config = small_config(Engine::FixedTilt, 0.10, 2);
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    let spec = StrategySpec::new(StrategyKind::Random, 5, Some(99)).unwrap();
    let a = prepared.run(Some(&spec)).unwrap();
    let b = prepared.run(Some(&spec)).unwrap();
    assert_eq!(a.returns.values, b.returns.values);
    let v1 = random_validation(&prepared, &a.panel).unwrap();
    let v2 = random_validation(&prepared, &a.panel).unwrap();
    let (m1, m2) = (v1.metrics.unwrap(), v2.metrics.unwrap());
    for (x, y) in m1.iter().zip(&m2) {
        assert_eq!(x.lo.to_bits(), y.lo.to_bits());
        assert_eq!(x.hi.to_bits(), y.hi.to_bits());
    }
}

/// Price changes strictly after a rebalance must not move any target
/// decided at or before it: scores, benchmarks, and calibration windows
/// only ever look backward.
#[test]
fn future_price_changes_cannot_reach_earlier_targets() {
    let out = small_synth();
    let shares = out.truth.shares.clone();
    let spec = AlignmentSpec { lookback_days: 60 };
    let dataset =
        align_dataset(out.panel.clone(), out.prices.clone(), out.esg.clone(), spec).unwrap();
    let config = small_config(Engine::OptCvar, 0.10, 60);
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    let base = prepared.run(Some(&config.strategy)).unwrap();
    assert!(base.weights.segments.len() >= 4, "need several quarters to split");

    let cutoff = base.weights.segments[base.weights.segments.len() / 2].rebalance_date;
    let bumped: BTreeMap<String, PriceSeries> = out
        .prices
        .iter()
        .map(|(id, s)| {
            let prices = s
                .dates
                .iter()
                .zip(&s.prices)
                .map(|(d, p)| if *d > cutoff { p * 1.5 } else { *p })
                .collect();
            (id.clone(), PriceSeries::new(id.clone(), s.dates.clone(), prices).unwrap())
        })
        .collect();
    let dataset2 = align_dataset(out.panel, bumped, out.esg, spec).unwrap();
    let prepared2 = prepare_backtest(&config, &dataset2, Some(&shares)).unwrap();
    let after = prepared2.run(Some(&config.strategy)).unwrap();

    assert_eq!(base.quarters, after.quarters, "a level shift cannot change eligibility");
    let mut later_differs = false;
    for (a, b) in base.weights.segments.iter().zip(&after.weights.segments) {
        assert_eq!(a.rebalance_date, b.rebalance_date);
        if a.rebalance_date <= cutoff {
            assert_eq!(a.asset_ids, b.asset_ids, "{}", a.rebalance_date);
            for (x, y) in a.target.iter().zip(&b.target) {
                assert_eq!(x.to_bits(), y.to_bits(), "target moved at {}", a.rebalance_date);
            }
        } else if a.target != b.target {
            later_differs = true;
        }
    }
    assert!(later_differs, "the bump reaches later calibration windows");

    assert_eq!(base.returns.dates, after.returns.dates);
    for ((d, x), y) in base.returns.dates.iter().zip(&base.returns.values).zip(&after.returns.values)
    {
        if *d <= cutoff {
            assert_eq!(x.to_bits(), y.to_bits(), "return moved at {d}");
        }
    }
}

/// A selection the cross-section cannot satisfy falls back to benchmark
/// weights quarter by quarter, and escalates only under fail_on_skip.
#[test]
fn oversized_selections_skip_to_benchmark_or_escalate() {
    let (dataset, shares) = small_dataset(0);
    // 45 per side needs 90 scored assets; only ~80 exist.
    let strategy = StrategySpec::new(StrategyKind::TopSmis, 45, None).unwrap();
    let mut config = BacktestConfig::new(strategy, Engine::FixedTilt);
    config.start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    config.end = NaiveDate::from_ymd_opt(2012, 12, 31).unwrap();
    config.benchmark_size = 40;
    config.n_random = 0;

    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    let strat = prepared.run(Some(&config.strategy)).unwrap();
    let bench = prepared.run(None).unwrap();
    assert_eq!(strat.quarters.len(), strat.diagnostics.len(), "every quarter skips");
    for d in &strat.diagnostics {
        assert_eq!(d.kind, DIAG_SELECTION_SKIPPED);
        assert!(d.quarter.is_some());
    }
    // The first quarter has no prior holdings to score; the rest report
    // the undersized universe.
    assert!(strat.diagnostics[0].detail.contains("no scores"), "{:?}", strat.diagnostics[0]);
    assert!(strat.diagnostics[1].detail.contains("universe"), "{:?}", strat.diagnostics[1]);
    for (a, b) in strat.returns.values.iter().zip(&bench.returns.values) {
        assert_eq!(a.to_bits(), b.to_bits(), "skips must hold exact benchmark weights");
    }

    let escalating = BacktestConfig { fail_on_skip: true, ..config };
    let prepared = prepare_backtest(&escalating, &dataset, Some(&shares)).unwrap();
    let err = prepared.run(Some(&escalating.strategy)).unwrap_err();
    assert!(
        matches!(err, Error::Validation(_) | Error::InsufficientUniverse { .. }),
        "unexpected error {err}"
    );
}

/// Quarters without enough calibration history are dropped from the
/// strategy and benchmark alike, never silently absorbed.
#[test]
fn dropped_quarters_are_excluded_from_both_paths() {
    let (dataset, shares) = small_dataset(60);
    let mut config = small_config(Engine::OptMinVariance, 0.10, 60);
    config.start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();

    let dropped: Vec<Quarter> = prepared
        .diagnostics()
        .iter()
        .filter(|d| d.kind == DIAG_QUARTER_DROPPED)
        .map(|d| d.quarter.unwrap())
        .collect();
    assert!(!dropped.is_empty(), "2010Q1 has no 60-day history and must drop");

    let strat = prepared.run(Some(&config.strategy)).unwrap();
    let bench = prepared.run(None).unwrap();
    assert_eq!(strat.returns.dates, bench.returns.dates);
    assert_eq!(strat.quarters, bench.quarters);
    for q in &dropped {
        assert!(!strat.quarters.contains(q), "dropped {q} still ran");
        // All drops here are history shortfalls at the start, so every
        // surviving return lies beyond them.
        assert!(strat.returns.dates[0] > q.end_date(), "returns reach into dropped {q}");
    }
}

/// Report, weights, and diagnostics files follow the documented layout
/// and reparse cleanly.
#[test]
fn output_files_have_the_documented_layout() {
    let (dataset, shares) = small_dataset(0);
    let config = small_config(Engine::FixedTilt, 0.10, 2);
    let mut report = run_backtest(&config, &dataset, Some(&shares)).unwrap();
    let prepared = prepare_backtest(&config, &dataset, Some(&shares)).unwrap();
    report.validation = Some(random_validation(&prepared, &report.strategy_panel).unwrap());
    let dir = tempfile::tempdir().unwrap();

    let report_path = dir.path().join("report.csv");
    write_report_csv(&report, &report_path).unwrap();
    let text = std::fs::read_to_string(&report_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 1 + 11 + 33);
    assert_eq!(header[0], "strategy");
    assert_eq!(&header[1..12], METRIC_NAMES);
    for (i, m) in METRIC_NAMES.iter().enumerate() {
        assert_eq!(header[12 + 3 * i], format!("ci_lo_{m}"));
        assert_eq!(header[13 + 3 * i], format!("ci_hi_{m}"));
        assert_eq!(header[14 + 3 * i], format!("flag_{m}"));
    }
    let strat: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(strat.len(), header.len());
    assert_eq!(strat[0], "smis");
    for v in &strat[1..12] {
        v.parse::<f64>().unwrap();
    }
    for i in 0..11 {
        strat[12 + 3 * i].parse::<f64>().unwrap();
        strat[13 + 3 * i].parse::<f64>().unwrap();
        assert!(["better", "worse", "inside"].contains(&strat[14 + 3 * i]));
    }
    let bench: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(bench.len(), header.len());
    assert_eq!(bench[0], "benchmark");
    for v in &bench[1..12] {
        v.parse::<f64>().unwrap();
    }
    assert!(bench[12..].iter().all(|v| v.is_empty()), "benchmark has no band columns");

    let weights_path = dir.path().join("weights.csv");
    write_weights_csv(&report.strategy_weights, &weights_path).unwrap();
    let text = std::fs::read_to_string(&weights_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "date,asset_id,weight");
    let mut by_date: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        let date: NaiveDate = fields[0].parse().unwrap();
        let w: f64 = fields[2].parse().unwrap();
        assert!(w != 0.0, "zero targets are omitted");
        *by_date.entry(date).or_insert(0.0) += w;
        rows += 1;
    }
    assert_eq!(by_date.len(), report.strategy_weights.segments.len());
    for (date, sum) in &by_date {
        assert!((sum - 1.0).abs() < 1e-9, "{date}: weights sum to {sum}");
    }
    let nonzero: usize = report
        .strategy_weights
        .segments
        .iter()
        .map(|s| s.target.iter().filter(|w| **w != 0.0).count())
        .sum();
    assert_eq!(rows, nonzero);

    // A skip-heavy run exercises the diagnostics file.
    let strategy = StrategySpec::new(StrategyKind::TopSmis, 45, None).unwrap();
    let mut skipping = BacktestConfig::new(strategy, Engine::FixedTilt);
    skipping.end = config.end;
    skipping.benchmark_size = 40;
    skipping.n_random = 0;
    let skip_report = run_backtest(&skipping, &dataset, Some(&shares)).unwrap();
    assert!(!skip_report.diagnostics.is_empty());
    let diag_path = dir.path().join("diagnostics.jsonl");
    write_diagnostics_jsonl(&skip_report.diagnostics, &diag_path).unwrap();
    let text = std::fs::read_to_string(&diag_path).unwrap();
    let mut n = 0usize;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["kind"], DIAG_SELECTION_SKIPPED);
        let q = v["quarter"].as_str().unwrap();
        assert!(q.len() == 6 && q.contains('Q'), "quarter format {q}");
        n += 1;
    }
    assert_eq!(n, skip_report.diagnostics.len());
}
