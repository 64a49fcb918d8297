//! `smislab score`: per-quarter scores from a holdings panel.

use std::path::PathBuf;

use anyhow::bail;
use smislab_core::scoring::{score_history, write_scores_csv};
use smislab_core::{impute_single_gaps, load_panel};

use crate::common::{filter_quarters, QuarterRange};
use crate::manifest::{with_manifest, ManifestBuilder};

#[derive(clap::Args)]
pub struct Args {
    /// Holdings CSV (fund_id,quarter,asset_id,weight).
    #[arg(long)]
    holdings: PathBuf,
    /// Fund metadata CSV (fund_id,sfdr_label,aum).
    #[arg(long)]
    funds: PathBuf,
    /// Quarters to score, e.g. 2011Q1 or 2011Q1:2013Q4 (default: all).
    #[arg(long)]
    quarter_range: Option<QuarterRange>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config = serde_json::json!({
        "quarter_range": args.quarter_range.map(|r| r.to_string()),
    });
    let mut builder = ManifestBuilder::new("score", config);
    builder.input("holdings", &args.holdings);
    builder.input("funds", &args.funds);

    with_manifest(&args.out, builder, |b| {
        let panel = load_panel(&args.holdings, &args.funds)?;
        let panel = impute_single_gaps(&panel);
        let quarters = filter_quarters(panel.quarters(), args.quarter_range.as_ref());
        if quarters.is_empty() {
            bail!("no quarters to score in the requested range");
        }
        let table = score_history(&panel, &quarters);
        for (q, reason) in &table.gaps {
            eprintln!("warning: {q} not scored: {reason}");
        }
        if table.rows.is_empty() {
            bail!("no asset-quarter was scorable; see the warnings above");
        }
        write_scores_csv(&table, &args.out.join("scores.csv"))?;
        b.artifact("scores.csv");
        Ok(())
    })
}
