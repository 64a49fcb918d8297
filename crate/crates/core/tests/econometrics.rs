//! End-to-end regression tests: quantile recovery on a large simulated
//! sample and panel assembly from generated data.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use smislab_core::data_model::{align_dataset, AlignmentSpec, Quarter};
use smislab_core::econometrics::{
    build_regression_panel, mmqr_fit, ols, vif, write_regression_csv,
};
use smislab_core::scoring::score_history;
use smislab_core::synth::{generate, SynthConfig};

/// Slopes of a location-scale model y = 1 + 2x + (1 + 0.5x)u with
/// standard normal u: the tau-quantile slope is 2 + 0.5 z_tau.
#[test]
fn quantile_slopes_recover_the_planted_model() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let n = 50_000;
    let xdist = Uniform::new(0.0f64, 4.0);
    let mut xcol = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xv: f64 = xdist.sample(&mut rng);
        let u: f64 = StandardNormal.sample(&mut rng);
        xcol.push(xv);
        y.push(1.0 + 2.0 * xv + (1.0 + 0.5 * xv) * u);
    }
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xcol[i] });
    let fit = mmqr_fit(&x, &y, &[0.1, 0.5, 0.9]).unwrap();
    // Standard normal quantiles at 0.1, 0.5, 0.9.
    let z = [-1.2815515655446004, 0.0, 1.2815515655446004];
    for (idx, (tau, zt)) in fit.taus.iter().zip(z).enumerate() {
        let slope = fit.coefficients[idx][1];
        let want = 2.0 + 0.5 * zt;
        assert!((slope - want).abs() < 0.05, "tau={tau}: slope {slope} want {want}");
    }
}

#[test]
fn ols_is_exact_on_noiseless_data() {
    let x = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let y: Vec<f64> = (0..4).map(|i| 2.0 * i as f64).collect();
    let f = ols(&x, &y).unwrap();
    assert!((f.coef[1] - 2.0).abs() < 1e-12 && f.coef[0].abs() < 1e-12);
    assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn vif_matches_the_two_column_closed_form() {
    // Sign patterns with joint frequencies 0.4/0.4/0.1/0.1 give
    // correlation 0.6, so both VIFs equal 1/(1 - 0.36) = 1.5625.
    let m = 1000;
    let mut v = DMatrix::zeros(4 * m, 2);
    let mut r = 0;
    for (a, b, c) in [(1.0, 1.0, 16), (-1.0, -1.0, 16), (1.0, -1.0, 4), (-1.0, 1.0, 4)] {
        for _ in 0..c * m / 10 {
            v[(r, 0)] = a;
            v[(r, 1)] = b;
            r += 1;
        }
    }
    assert_eq!(r, 4 * m);
    let vifs = vif(&v).unwrap();
    assert!((vifs[0] - 1.5625).abs() < 1e-9, "{vifs:?}");
    assert!((vifs[1] - 1.5625).abs() < 1e-9, "{vifs:?}");
}

fn messy_config() -> SynthConfig {
    SynthConfig {
        n_assets: 30,
        n_art9: 3,
        n_art8: 6,
        n_art6: 3,
        n_quarters: 6,
        esg_missing_rate: 0.15,
        covariate_missing_rate: 0.08,
        gap_rate: 0.0,
        price_gap_rate: 0.0,
        rng_seed: 99,
        ..SynthConfig::default()
    }
}

/// Panel assembly on generated data with planted missingness: layout,
/// lag convention, drop accounting, and the dummy encoding all checked
/// against the raw records.
#[test]
fn regression_panel_reconciles_with_the_raw_records() {
    let out = generate(&messy_config()).unwrap();
    let quarters: Vec<Quarter> = out.panel.quarters().into_iter().collect();
    let scores = score_history(&out.panel, &quarters);
    assert!(!scores.rows.is_empty());
    let dataset = align_dataset(
        out.panel.clone(),
        out.prices.clone(),
        out.esg.clone(),
        AlignmentSpec { lookback_days: 0 },
    )
    .unwrap();

    let panel = build_regression_panel(&dataset.esg, &scores).unwrap();

    // Layout: intercept, thirteen covariates, sector dummies.
    assert_eq!(panel.names[0], "intercept");
    assert_eq!(panel.names[1], "esg_score");
    assert_eq!(panel.names[13], "dividend_yield");
    assert!(panel.names[14..].iter().all(|n| n.starts_with("sector_")));
    assert_eq!(panel.x.nrows(), panel.y.len());
    assert_eq!(panel.x.ncols(), panel.names.len());
    assert_eq!(panel.keys.len(), panel.y.len());

    // The reference sector is absorbed, never a dummy.
    let reference = panel.reference_sector.clone().expect("several sectors are planted");
    assert!(!panel.names.contains(&format!("sector_{reference}")));

    // Every score row lands in the panel or in exactly one drop bucket.
    let kept = panel.y.len();
    let dropped: usize = panel.dropped.values().sum();
    assert_eq!(kept + dropped, scores.rows.len());
    assert!(dropped > 0, "missingness rates should drop some rows");
    let legal: Vec<String> = ["missing_esg_record", "missing_gics_sector"]
        .into_iter()
        .map(String::from)
        .chain(panel.names[1..14].iter().map(|n| format!("missing_{n}")))
        .collect();
    for key in panel.dropped.keys() {
        assert!(legal.contains(key), "unexpected drop bucket {key}");
    }

    for (i, (asset, quarter)) in panel.keys.iter().enumerate() {
        // Dependent variable is the count score in percent, bit for bit.
        let row = scores
            .rows
            .iter()
            .find(|r| r.smis.asset_id == *asset && r.smis.quarter == *quarter)
            .expect("every key comes from a score row");
        assert_eq!(panel.y[i], row.smis.smis * 100.0);

        // Regressors come from the year of the previous quarter.
        let rec = dataset
            .esg
            .get(&(asset.clone(), quarter.prev().year))
            .expect("kept rows have the lagged record");
        assert_eq!(panel.x[(i, 0)], 1.0);
        assert_eq!(panel.x[(i, 1)], rec.esg_score);

        // One-hot sector block, all zeros for the reference sector.
        let sector = rec.gics_sector.clone().expect("kept rows have a sector");
        let block: Vec<f64> = (14..panel.names.len()).map(|j| panel.x[(i, j)]).collect();
        let ones = block.iter().filter(|v| **v == 1.0).count();
        assert!(block.iter().all(|v| *v == 0.0 || *v == 1.0));
        if sector == reference {
            assert_eq!(ones, 0, "reference sector must be absorbed");
        } else {
            assert_eq!(ones, 1);
            let j = panel.names.iter().position(|n| *n == format!("sector_{sector}")).unwrap();
            assert_eq!(panel.x[(i, j)], 1.0);
        }
    }
}

#[test]
fn regression_csv_has_one_column_per_tau() {
    let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { (i % 5) as f64 });
    let y: Vec<f64> = (0..40).map(|i| (i % 5) as f64 * 2.0 + if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let fit = mmqr_fit(&x, &y, &[0.25, 0.75]).unwrap();
    let names = vec!["intercept".to_string(), "x".to_string()];
    let dir = tempfile::tempdir().unwrap();

    let bare = dir.path().join("fit.csv");
    write_regression_csv(&names, &fit, None, &bare).unwrap();
    let text = std::fs::read_to_string(&bare).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "regressor,tau_0.25,tau_0.75");
    assert_eq!(lines.clone().count(), 2);
    assert!(lines.next().unwrap().starts_with("intercept,"));

    let with_se = dir.path().join("fit_se.csv");
    let se = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
    write_regression_csv(&names, &fit, Some(&se), &with_se).unwrap();
    let text = std::fs::read_to_string(&with_se).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "regressor,tau_0.25,tau_0.75,se_0.25,se_0.75"
    );

    // Shape mismatches are rejected rather than written.
    let short = vec!["intercept".to_string()];
    assert!(write_regression_csv(&short, &fit, None, &bare).is_err());
    let bad_se = vec![vec![0.1], vec![0.3]];
    assert!(write_regression_csv(&names, &fit, Some(&bad_se), &bare).is_err());
}
