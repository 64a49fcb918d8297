//! Loader round-trips against generator output and rejection of
//! malformed input with file and line context.

use std::path::{Path, PathBuf};

use smislab_core::data_model::{load_esg, load_panel, load_prices};
use smislab_core::synth::{generate, write_synth_csvs, SynthConfig};

fn mini_output() -> smislab_core::synth::SynthOutput {
    let cfg = SynthConfig {
        n_assets: 25,
        n_art9: 3,
        n_art8: 6,
        n_art6: 3,
        n_quarters: 5,
        gap_rate: 0.05,
        price_gap_rate: 0.1,
        esg_missing_rate: 0.1,
        covariate_missing_rate: 0.1,
        rng_seed: 404,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap()
}

/// Values written with shortest-round-trip formatting must come back
/// bit for bit through the loaders.
#[test]
fn loaders_round_trip_generated_files() {
    let out = mini_output();
    let dir = tempfile::tempdir().unwrap();
    write_synth_csvs(&out, dir.path()).unwrap();

    let panel = load_panel(&dir.path().join("holdings.csv"), &dir.path().join("funds.csv")).unwrap();
    assert_eq!(panel.len(), out.panel.len());
    let funds: Vec<_> = panel.funds().collect();
    let orig_funds: Vec<_> = out.panel.funds().collect();
    assert_eq!(funds.len(), orig_funds.len());
    for (a, b) in funds.iter().zip(&orig_funds) {
        assert_eq!(a.fund_id, b.fund_id);
        assert_eq!(a.sfdr_label, b.sfdr_label);
        assert_eq!(a.aum, b.aum);
    }
    for snap in out.panel.snapshots() {
        let loaded = panel
            .snapshot(&snap.fund_id, snap.quarter)
            .unwrap_or_else(|| panic!("missing snapshot {} {}", snap.fund_id, snap.quarter));
        assert_eq!(loaded.positions.len(), snap.positions.len());
        for (asset, w) in &snap.positions {
            assert_eq!(loaded.positions[asset].to_bits(), w.to_bits(), "{asset}");
        }
    }

    let prices = load_prices(&dir.path().join("prices.csv")).unwrap();
    assert_eq!(prices.len(), out.prices.len());
    for (id, series) in &out.prices {
        let loaded = &prices[id];
        assert_eq!(loaded.dates, series.dates, "{id}");
        assert_eq!(loaded.prices.len(), series.prices.len());
        for (a, b) in loaded.prices.iter().zip(&series.prices) {
            assert_eq!(a.to_bits(), b.to_bits(), "{id}");
        }
    }

    let esg = load_esg(&dir.path().join("esg.csv")).unwrap();
    assert_eq!(esg.len(), out.esg.len());
    for (a, b) in esg.iter().zip(&out.esg) {
        assert_eq!(a.asset_id, b.asset_id);
        assert_eq!(a.year, b.year);
        assert_eq!(a.esg_score.to_bits(), b.esg_score.to_bits());
        assert_eq!(a.green_revenues, b.green_revenues);
        assert_eq!(a.std_total_emission, b.std_total_emission);
        assert_eq!(a.target_reduction, b.target_reduction);
        assert_eq!(a.board_diversity, b.board_diversity);
        assert_eq!(a.human_policy_rights, b.human_policy_rights);
        assert_eq!(a.armaments, b.armaments);
        assert_eq!(a.esg_controversies, b.esg_controversies);
        assert_eq!(a.size, b.size);
        assert_eq!(a.pb_ratio, b.pb_ratio);
        assert_eq!(a.roe, b.roe);
        assert_eq!(a.pe_ratio, b.pe_ratio);
        assert_eq!(a.dividend_yield, b.dividend_yield);
        assert_eq!(a.gics_sector, b.gics_sector);
    }
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

#[test]
fn malformed_funds_and_holdings_are_rejected_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let good_funds = write(
        &dir.path().join("funds.csv"),
        "fund_id,sfdr_label,aum_mln\nF1,9,120\nF2,8,85\n",
    );
    let good_holdings = write(
        &dir.path().join("holdings.csv"),
        "fund_id,quarter,asset_id,weight\nF1,2020Q1,AAA,0.5\nF2,2020Q1,AAA,0.4\n",
    );
    assert!(load_panel(&good_holdings, &good_funds).is_ok());

    let bad_label = write(&dir.path().join("bad_label.csv"), "fund_id,sfdr_label,aum_mln\nF1,7,120\n");
    let err = load_panel(&good_holdings, &bad_label).unwrap_err().to_string();
    assert!(err.contains("bad_label.csv") && err.contains('7'), "{err}");

    let unknown_fund = write(
        &dir.path().join("unknown_fund.csv"),
        "fund_id,quarter,asset_id,weight\nFX,2020Q1,AAA,0.5\n",
    );
    let err = load_panel(&unknown_fund, &good_funds).unwrap_err().to_string();
    assert!(err.contains("unknown fund FX"), "{err}");

    let dup = write(
        &dir.path().join("dup.csv"),
        "fund_id,quarter,asset_id,weight\nF1,2020Q1,AAA,0.3\nF1,2020Q1,AAA,0.2\n",
    );
    let err = load_panel(&dup, &good_funds).unwrap_err().to_string();
    assert!(err.contains("duplicate holding") && err.contains(":3:"), "{err}");

    let bad_quarter = write(
        &dir.path().join("bad_quarter.csv"),
        "fund_id,quarter,asset_id,weight\nF1,2020Q5,AAA,0.5\n",
    );
    let err = load_panel(&bad_quarter, &good_funds).unwrap_err().to_string();
    assert!(err.contains("quarter number 5"), "{err}");

    let bad_weight = write(
        &dir.path().join("bad_weight.csv"),
        "fund_id,quarter,asset_id,weight\nF1,2020Q1,AAA,heavy\n",
    );
    let err = load_panel(&bad_weight, &good_funds).unwrap_err().to_string();
    assert!(err.contains("weight") && err.contains("heavy"), "{err}");
}

#[test]
fn malformed_prices_are_rejected_with_context() {
    let dir = tempfile::tempdir().unwrap();

    let dup = write(
        &dir.path().join("dup.csv"),
        "asset_id,date,close\nAAA,2020-01-02,10\nAAA,2020-01-02,11\n",
    );
    let err = load_prices(&dup).unwrap_err().to_string();
    assert!(err.contains("duplicate price") && err.contains("2020-01-02"), "{err}");

    let bad_date = write(&dir.path().join("bad_date.csv"), "asset_id,date,close\nAAA,02/01/2020,10\n");
    let err = load_prices(&bad_date).unwrap_err().to_string();
    assert!(err.contains("bad date"), "{err}");

    let negative = write(&dir.path().join("neg.csv"), "asset_id,date,close\nAAA,2020-01-02,-3\n");
    let err = load_prices(&negative).unwrap_err().to_string();
    assert!(err.contains("finite and > 0"), "{err}");

    // Out-of-order rows are fine; the series comes back sorted.
    let unordered = write(
        &dir.path().join("unordered.csv"),
        "asset_id,date,close\nAAA,2020-01-03,11\nAAA,2020-01-02,10\n",
    );
    let prices = load_prices(&unordered).unwrap();
    assert_eq!(prices["AAA"].prices, vec![10.0, 11.0]);
}

#[test]
fn malformed_esg_is_rejected_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let header = "asset_id,year,esg_score,green_revenues,std_total_emission,target_reduction,\
board_diversity,human_policy_rights,armaments,esg_controversies,size,pb_ratio,roe,pe_ratio,\
dividend_yield,gics_sector";

    let ok = write(
        &dir.path().join("ok.csv"),
        &format!("{header}\nAAA,2020,55,,,1,30,0,1,80,10,1.5,0.1,12,0.02,Energy\nAAA,2021,60,,,,,,,,,,,,,\n"),
    );
    let records = load_esg(&ok).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].gics_sector.as_deref(), Some("Energy"));
    assert_eq!(records[1].gics_sector, None);
    assert_eq!(records[1].green_revenues, None);

    let dup = write(
        &dir.path().join("dup.csv"),
        &format!("{header}\nAAA,2020,55,,,,,,,,,,,,,\nAAA,2020,60,,,,,,,,,,,,,\n"),
    );
    let err = load_esg(&dup).unwrap_err().to_string();
    assert!(err.contains("duplicate ESG record"), "{err}");

    let bad_flag = write(
        &dir.path().join("bad_flag.csv"),
        &format!("{header}\nAAA,2020,55,,,2,,,,,,,,,,\n"),
    );
    let err = load_esg(&bad_flag).unwrap_err().to_string();
    assert!(err.contains("expected 0 or 1"), "{err}");

    let bad_score = write(
        &dir.path().join("bad_score.csv"),
        &format!("{header}\nAAA,2020,140,,,,,,,,,,,,,\n"),
    );
    let err = load_esg(&bad_score).unwrap_err().to_string();
    assert!(err.contains("esg_score") && err.contains("140"), "{err}");
}
