//! `smislab regress`: quantile regression of scores on lagged
//! fundamentals with optional cluster-bootstrap standard errors.

use std::path::PathBuf;

use anyhow::bail;
use smislab_core::econometrics::{
    build_regression_panel, mmqr_bootstrap_se, mmqr_fit, write_regression_csv, DEFAULT_TAUS,
};
use smislab_core::scoring::score_history;
use smislab_core::{esg_by_year, impute_single_gaps, load_esg, load_panel, AssetId};

use crate::common::{filter_quarters, resolve_seed, QuarterRange, UsageError};
use crate::manifest::{with_manifest, ManifestBuilder};

#[derive(clap::Args)]
pub struct Args {
    /// Holdings CSV (fund_id,quarter,asset_id,weight).
    #[arg(long)]
    holdings: PathBuf,
    /// Fund metadata CSV (fund_id,sfdr_label,aum).
    #[arg(long)]
    funds: PathBuf,
    /// Yearly ESG and covariate CSV.
    #[arg(long)]
    esg: PathBuf,
    /// Quarters to score, e.g. 2011Q1:2013Q4 (default: all).
    #[arg(long)]
    quarter_range: Option<QuarterRange>,
    /// Comma-separated quantile levels in (0, 1); sorted, deduplicated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAUS)]
    taus: Vec<f64>,
    /// Cluster-bootstrap draws for standard errors (0 = none, else >= 2).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Bootstrap seed (SMISLAB_SEED overrides).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut taus = args.taus.clone();
    if taus.iter().any(|t| !(0.0 < *t && *t < 1.0)) {
        return Err(UsageError(format!("--taus must lie strictly in (0, 1), got {taus:?}")).into());
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    if args.bootstrap == 1 {
        return Err(UsageError("--bootstrap needs 0 or at least 2 draws".into()).into());
    }
    let seed = resolve_seed(args.seed, 17)?;

    let config = serde_json::json!({
        "quarter_range": args.quarter_range.map(|r| r.to_string()),
        "taus": taus,
        "bootstrap": args.bootstrap,
        "seed": seed,
    });
    let mut builder = ManifestBuilder::new("regress", config).seed(seed);
    builder.input("holdings", &args.holdings);
    builder.input("funds", &args.funds);
    builder.input("esg", &args.esg);

    with_manifest(&args.out, builder, |b| {
        let panel = load_panel(&args.holdings, &args.funds)?;
        let panel = impute_single_gaps(&panel);
        let quarters = filter_quarters(panel.quarters(), args.quarter_range.as_ref());
        if quarters.is_empty() {
            bail!("no quarters to score in the requested range");
        }
        let scores = score_history(&panel, &quarters);
        for (q, reason) in &scores.gaps {
            eprintln!("warning: {q} not scored: {reason}");
        }
        let esg = esg_by_year(load_esg(&args.esg)?)?;
        let rp = build_regression_panel(&esg, &scores)?;
        for (reason, n) in &rp.dropped {
            eprintln!("note: {n} row(s) dropped: {reason}");
        }
        let fit = mmqr_fit(&rp.x, &rp.y, &taus)?;
        if fit.clipped_scales > 0 {
            eprintln!("note: {} fitted scale(s) clipped to the positivity floor", fit.clipped_scales);
        }
        let se = if args.bootstrap >= 2 {
            let clusters: Vec<AssetId> = rp.keys.iter().map(|(a, _)| a.clone()).collect();
            Some(mmqr_bootstrap_se(&rp.x, &rp.y, &clusters, &taus, args.bootstrap, seed)?)
        } else {
            None
        };
        write_regression_csv(&rp.names, &fit, se.as_deref(), &args.out.join("regression_results.csv"))?;
        b.artifact("regression_results.csv");
        Ok(())
    })
}
