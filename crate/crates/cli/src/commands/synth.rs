//! `smislab synth`: write a seeded synthetic dataset.

use std::path::PathBuf;

use smislab_core::synth::{generate, write_synth_csvs, SynthConfig};
use smislab_core::Quarter;

use crate::common::resolve_seed;
use crate::manifest::{with_manifest, ManifestBuilder};

/// Flags default to the generator's standard scale (400 assets,
/// 30/120/30 funds, 56 quarters from 2010Q1).
#[derive(clap::Args)]
pub struct Args {
    /// Output directory for the dataset CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Number of assets.
    #[arg(long)]
    n_assets: Option<usize>,
    /// Article 9 fund count.
    #[arg(long)]
    n_art9: Option<usize>,
    /// Article 8 fund count.
    #[arg(long)]
    n_art8: Option<usize>,
    /// Article 6 fund count.
    #[arg(long)]
    n_art6: Option<usize>,
    /// Number of quarters.
    #[arg(long)]
    n_quarters: Option<usize>,
    /// First quarter, e.g. 2010Q1.
    #[arg(long)]
    start: Option<Quarter>,
    /// Base holding probability per fund.
    #[arg(long)]
    base_hold_rate: Option<f64>,
    /// Holding-probability link to the latent loading.
    #[arg(long)]
    hold_link: Option<f64>,
    /// Annual return-drift link to the latent loading.
    #[arg(long)]
    drift_link: Option<f64>,
    /// Annual market drift.
    #[arg(long)]
    market_drift: Option<f64>,
    /// Annual market volatility.
    #[arg(long)]
    market_vol: Option<f64>,
    /// Annual idiosyncratic volatility.
    #[arg(long)]
    idio_vol: Option<f64>,
    /// Holdings gap probability per interior fund-quarter.
    #[arg(long)]
    gap_rate: Option<f64>,
    /// Fraction of assets with a planted price hole.
    #[arg(long)]
    price_gap_rate: Option<f64>,
    /// Probability that an (asset, year) ESG record is dropped.
    #[arg(long)]
    esg_missing_rate: Option<f64>,
    /// Probability that a covariate cell is missing.
    #[arg(long)]
    covariate_missing_rate: Option<f64>,
    /// Master seed (SMISLAB_SEED overrides).
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        n_assets: args.n_assets.unwrap_or(d.n_assets),
        n_art9: args.n_art9.unwrap_or(d.n_art9),
        n_art8: args.n_art8.unwrap_or(d.n_art8),
        n_art6: args.n_art6.unwrap_or(d.n_art6),
        n_quarters: args.n_quarters.unwrap_or(d.n_quarters),
        start: args.start.unwrap_or(d.start),
        base_hold_rate: args.base_hold_rate.unwrap_or(d.base_hold_rate),
        hold_link: args.hold_link.unwrap_or(d.hold_link),
        drift_link: args.drift_link.unwrap_or(d.drift_link),
        market_drift: args.market_drift.unwrap_or(d.market_drift),
        market_vol: args.market_vol.unwrap_or(d.market_vol),
        idio_vol: args.idio_vol.unwrap_or(d.idio_vol),
        gap_rate: args.gap_rate.unwrap_or(d.gap_rate),
        price_gap_rate: args.price_gap_rate.unwrap_or(d.price_gap_rate),
        esg_missing_rate: args.esg_missing_rate.unwrap_or(d.esg_missing_rate),
        covariate_missing_rate: args.covariate_missing_rate.unwrap_or(d.covariate_missing_rate),
        rng_seed: resolve_seed(args.seed, d.rng_seed)?,
    };

    let builder = ManifestBuilder::new("synth", serde_json::to_value(&config)?)
        .seed(config.rng_seed);
    with_manifest(&args.out, builder, |b| {
        let output = generate(&config)?;
        let files = write_synth_csvs(&output, &args.out)?;
        for f in &files {
            if let Some(name) = f.file_name() {
                b.artifact(&name.to_string_lossy());
            }
        }
        Ok(())
    })
}
