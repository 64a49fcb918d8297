//! `smislab report`: figure-ready CSV exports joining scores with ESG.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::bail;
use clap::ValueEnum;
use smislab_core::scoring::score_history;
use smislab_core::{esg_by_year, impute_single_gaps, load_esg, load_panel, EsgRecord, Quarter};

use crate::common::{filter_quarters, QuarterRange};
use crate::manifest::{with_manifest, ManifestBuilder};

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

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
    /// Quarters to export, e.g. 2011Q1:2013Q4 (default: all).
    #[arg(long)]
    quarter_range: Option<QuarterRange>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// The ESG record for a quarter: its calendar year, falling back one
/// year when scores lead the yearly ESG panel.
fn esg_for<'a>(
    esg: &'a BTreeMap<(String, i32), EsgRecord>,
    asset: &str,
    quarter: Quarter,
) -> Option<&'a EsgRecord> {
    esg.get(&(asset.to_owned(), quarter.year))
        .or_else(|| esg.get(&(asset.to_owned(), quarter.year - 1)))
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config = serde_json::json!({
        "quarter_range": args.quarter_range.map(|r| r.to_string()),
        "format": "csv",
    });
    let mut builder = ManifestBuilder::new("report", config);
    builder.input("holdings", &args.holdings);
    builder.input("funds", &args.funds);
    builder.input("esg", &args.esg);

    with_manifest(&args.out, builder, |b| {
        let panel = load_panel(&args.holdings, &args.funds)?;
        let panel = impute_single_gaps(&panel);
        let quarters = filter_quarters(panel.quarters(), args.quarter_range.as_ref());
        if quarters.is_empty() {
            bail!("no quarters to export in the requested range");
        }
        let table = score_history(&panel, &quarters);
        for (q, reason) in &table.gaps {
            eprintln!("warning: {q} not scored: {reason}");
        }
        let esg = esg_by_year(load_esg(&args.esg)?)?;

        // sector -> (n, sum smis, sum esg)
        let mut sectors: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
        let mut unmatched = 0usize;
        let scatter_path = args.out.join("scatter.csv");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&scatter_path)?);
        writeln!(f, "quarter,asset_id,esg,smis,significant")?;
        for row in &table.rows {
            let s = &row.smis;
            let Some(rec) = esg_for(&esg, &s.asset_id, s.quarter) else {
                unmatched += 1;
                continue;
            };
            writeln!(
                f,
                "{},{},{},{},{}",
                s.quarter,
                s.asset_id,
                rec.esg_score,
                s.smis,
                u8::from(s.significant_90)
            )?;
            if let Some(sector) = &rec.gics_sector {
                let e = sectors.entry(sector.clone()).or_insert((0, 0.0, 0.0));
                e.0 += 1;
                e.1 += s.smis;
                e.2 += rec.esg_score;
            }
        }
        f.flush()?;
        b.artifact("scatter.csv");
        if unmatched > 0 {
            eprintln!("note: {unmatched} scored asset-quarter(s) had no ESG record and were left out");
        }

        let sectors_path = args.out.join("sectors.csv");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&sectors_path)?);
        writeln!(f, "sector,n,mean_smis,mean_esg")?;
        for (sector, (n, smis_sum, esg_sum)) in &sectors {
            writeln!(f, "{},{},{},{}", sector, n, smis_sum / *n as f64, esg_sum / *n as f64)?;
        }
        f.flush()?;
        b.artifact("sectors.csv");
        Ok(())
    })
}
