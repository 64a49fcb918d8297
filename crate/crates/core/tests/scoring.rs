//! Statistical calibration and invariance tests for the holding-based
//! scores and their significance tests.

use proptest::prelude::*;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use smislab_core::data_model::{FundMeta, HoldingsPanel, HoldingsSnapshot, SfdrLabel};
use smislab_core::scoring::{score_history, smis_test, smisw_test, write_scores_csv, read_scores_csv};
use smislab_core::Quarter;

/// Under the null (both groups share the holding rate), a 10% test must
/// reject about 10% of the time. 2000 trials put the binomial standard
/// error near 0.7%, so +-2.5% is a safe gate; the z statistic is
/// two-sided normal, exact only asymptotically, hence the slack.
#[test]
fn z_test_is_calibrated_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (n1, n2) = (200u64, 200u64);
    let p = 0.3;
    let trials = 2000;
    let bin1 = Binomial::new(n1, p).unwrap();
    let bin2 = Binomial::new(n2, p).unwrap();
    let mut rejections = 0usize;
    let mut tested = 0usize;
    for _ in 0..trials {
        let s1 = bin1.sample(&mut rng);
        let s2 = bin2.sample(&mut rng);
        match smis_test(s1 as usize, n1 as usize, s2 as usize, n2 as usize) {
            Ok((_, pval)) => {
                tested += 1;
                if pval < 0.10 {
                    rejections += 1;
                }
            }
            Err(_) => {} // degenerate draw, vanishingly rare at p = 0.3
        }
    }
    let rate = rejections as f64 / tested as f64;
    assert!(
        (rate - 0.10).abs() < 0.025,
        "null rejection rate {rate:.4} outside 0.10 +- 0.025 ({tested} trials)"
    );
}

/// Same calibration check for the pooled t-test on weight means.
#[test]
fn t_test_is_calibrated_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (n1, n2) = (200usize, 200usize);
    let trials = 2000;
    let mut rejections = 0usize;
    for _ in 0..trials {
        let stats = |n: usize, rng: &mut ChaCha8Rng| -> (f64, f64) {
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    0.01 + 0.002 * z
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, var)
        };
        let (m1, v1) = stats(n1, &mut rng);
        let (m2, v2) = stats(n2, &mut rng);
        let (_, pval, _) = smisw_test(n1, m1, v1, n2, m2, v2).unwrap();
        if pval < 0.10 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    assert!(
        (rate - 0.10).abs() < 0.025,
        "null rejection rate {rate:.4} outside 0.10 +- 0.025"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    /// The score is a difference of proportions, so it must stay in
    /// [-1, 1] and flip sign exactly when the groups swap.
    #[test]
    fn score_bounds_and_antisymmetry(
        n1 in 1usize..50,
        n2 in 1usize..50,
        s1_frac in 0.0f64..=1.0,
        s2_frac in 0.0f64..=1.0,
    ) {
        let s1 = (s1_frac * n1 as f64).round() as usize;
        let s2 = (s2_frac * n2 as f64).round() as usize;
        let smis = s1 as f64 / n1 as f64 - s2 as f64 / n2 as f64;
        prop_assert!((-1.0..=1.0).contains(&smis));
        let flipped = s2 as f64 / n2 as f64 - s1 as f64 / n1 as f64;
        prop_assert_eq!(smis, -flipped);

        if let Ok((z, p)) = smis_test(s1, n1, s2, n2) {
            let (z2, p2) = smis_test(s2, n2, s1, n1).unwrap();
            prop_assert_eq!(z, -z2, "z must flip sign exactly");
            prop_assert_eq!(p, p2, "two-sided p must be symmetric");
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

#[test]
fn scores_csv_round_trips_exactly() {
    let q1 = Quarter::new(2021, 1).unwrap();
    let q2 = q1.next();
    let fund = |id: &str, label| FundMeta::new(id.into(), label, 50.0).unwrap();
    let snap = |fund: &str, q, positions: &[(&str, f64)]| {
        HoldingsSnapshot::new(
            fund.into(),
            q,
            positions.iter().map(|(a, w)| (a.to_string(), *w)).collect(),
        )
        .unwrap()
    };
    let funds = vec![
        fund("F1", SfdrLabel::Art9),
        fund("F2", SfdrLabel::Art9),
        fund("F3", SfdrLabel::Art8),
        fund("F4", SfdrLabel::Art6),
    ];
    let snaps = vec![
        snap("F1", q1, &[("AAA", 0.3), ("BBB", 0.1)]),
        snap("F2", q1, &[("AAA", 0.2)]),
        snap("F3", q1, &[("BBB", 0.4)]),
        snap("F4", q1, &[("AAA", 0.1), ("BBB", 0.2)]),
        snap("F1", q2, &[("AAA", 0.25)]),
        snap("F2", q2, &[("BBB", 0.15)]),
        snap("F3", q2, &[("AAA", 0.05)]),
        snap("F4", q2, &[("BBB", 0.35)]),
    ];
    let panel = HoldingsPanel::new(snaps, funds).unwrap();
    let table = score_history(&panel, &[q1, q2]);
    assert!(table.gaps.is_empty());
    assert_eq!(table.rows.len(), 4); // 2 assets x 2 quarters

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    write_scores_csv(&table, &path).unwrap();
    let back = read_scores_csv(&path).unwrap();
    assert_eq!(back.len(), table.rows.len());
    for (row, (asset, quarter, smis, smisw, sig)) in table.rows.iter().zip(&back) {
        assert_eq!(&row.smis.asset_id, asset);
        assert_eq!(row.smis.quarter, *quarter);
        // Rust float formatting is shortest-round-trip, so equality is exact.
        assert_eq!(row.smis.smis, *smis);
        assert_eq!(row.smisw.smisw, *smisw);
        assert_eq!(row.smis.significant_90, *sig);
    }
}
