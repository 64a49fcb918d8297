//! Deterministic synthetic dataset generator with planted structure.
//!
//! Each asset carries a latent sustainability loading s in [-1, 1].
//! Article 9 funds hold asset i with probability logistic(a + b s_i),
//! all other funds with probability logistic(a), so the SMIS score is a
//! noisy monotone readout of s. Prices drift at c s_i per year plus a
//! common market factor, so tilting toward high-s assets earns a planted
//! premium. ESG scores derive from a second latent only partially
//! correlated with s, keeping the ESG-SMIS association deliberately
//! weak. Ground truth (s and shares outstanding) is returned for tests
//! and for cap-weighted benchmark construction.
//!
//! Generation is sequential in a fixed order from per-purpose ChaCha
//! streams, so output is bit-identical for a fixed seed.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal, Normal, StandardNormal};

use crate::data_model::{
    AssetId, EsgRecord, FundId, FundMeta, HoldingsPanel, HoldingsSnapshot, PriceSeries, Quarter,
    SfdrLabel, ESG_COLUMNS,
};
use crate::econometrics::standardized_emission;
use crate::error::{Error, Result};

/// Trading days per year assumed by the drift scaling.
const DAYS_PER_YEAR: f64 = 250.0;

/// The 11 GICS sectors used for planted sector assignments.
pub const GICS_SECTORS: [&str; 11] = [
    "CommunicationServices",
    "ConsumerDiscretionary",
    "ConsumerStaples",
    "Energy",
    "Financials",
    "HealthCare",
    "Industrials",
    "InformationTechnology",
    "Materials",
    "RealEstate",
    "Utilities",
];

/// Generator configuration. `Default` gives the desk-scale dataset:
/// 400 assets, 30 Article 9 / 120 Article 8 / 30 Article 6 funds,
/// 56 quarters from 2010Q1.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Number of assets.
    pub n_assets: usize,
    /// Article 9 fund count.
    pub n_art9: usize,
    /// Article 8 fund count.
    pub n_art8: usize,
    /// Article 6 fund count.
    pub n_art6: usize,
    /// Number of quarters, starting at `start`.
    pub n_quarters: usize,
    /// First quarter.
    pub start: Quarter,
    /// Base holding probability for every fund (the logistic intercept
    /// is its logit).
    pub base_hold_rate: f64,
    /// Holding-probability link strength b: Article 9 funds hold asset i
    /// with probability logistic(logit(base) + b s_i).
    pub hold_link: f64,
    /// Return-drift link strength c: asset i drifts at c s_i per year on
    /// top of the market drift.
    pub drift_link: f64,
    /// Market drift per year.
    pub market_drift: f64,
    /// Market factor volatility per year.
    pub market_vol: f64,
    /// Idiosyncratic volatility per year.
    pub idio_vol: f64,
    /// Probability that an interior fund-quarter becomes a single
    /// holdings gap (plus a couple of planted double gaps).
    pub gap_rate: f64,
    /// Fraction of assets given one 5-day hole in their price series.
    pub price_gap_rate: f64,
    /// Probability that an (asset, year) ESG record is dropped.
    pub esg_missing_rate: f64,
    /// Probability that an individual covariate cell is missing.
    pub covariate_missing_rate: f64,
    /// Master seed.
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_assets: 400,
            n_art9: 30,
            n_art8: 120,
            n_art6: 30,
            n_quarters: 56,
            start: Quarter { year: 2010, q: 1 },
            base_hold_rate: 0.15,
            hold_link: 1.5,
            drift_link: 0.04,
            market_drift: 0.05,
            market_vol: 0.15,
            idio_vol: 0.20,
            gap_rate: 0.01,
            price_gap_rate: 0.02,
            esg_missing_rate: 0.01,
            covariate_missing_rate: 0.02,
            rng_seed: 20100401,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.n_quarters == 0 || self.n_art9 == 0 {
            return Err(Error::Validation(
                "synth needs at least one asset, one quarter, and one Article 9 fund".into(),
            ));
        }
        if self.n_art8 + self.n_art6 == 0 {
            return Err(Error::Validation("synth needs at least one non-Article-9 fund".into()));
        }
        for (name, v) in [
            ("base_hold_rate", self.base_hold_rate),
            ("hold_link", self.hold_link),
            ("drift_link", self.drift_link),
            ("market_drift", self.market_drift),
            ("market_vol", self.market_vol),
            ("idio_vol", self.idio_vol),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        if !(0.0 < self.base_hold_rate && self.base_hold_rate < 1.0) {
            return Err(Error::Validation("base_hold_rate must lie in (0, 1)".into()));
        }
        for (name, v) in [
            ("gap_rate", self.gap_rate),
            ("price_gap_rate", self.price_gap_rate),
            ("esg_missing_rate", self.esg_missing_rate),
            ("covariate_missing_rate", self.covariate_missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn quarters(&self) -> Vec<Quarter> {
        let mut out = Vec::with_capacity(self.n_quarters);
        let mut q = self.start;
        for _ in 0..self.n_quarters {
            out.push(q);
            q = q.next();
        }
        out
    }
}

/// Per-asset planted quantities.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Latent sustainability loading s in [-1, 1] per asset.
    pub latent: BTreeMap<AssetId, f64>,
    /// Shares outstanding per asset (for cap-proxy benchmarks).
    pub shares: BTreeMap<AssetId, f64>,
}

/// Everything the generator produces.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    /// Holdings with planted single (and a couple of double) gaps.
    pub panel: HoldingsPanel,
    /// Price series, some with a planted 5-day hole.
    pub prices: BTreeMap<AssetId, PriceSeries>,
    /// Annual ESG records covering the year before the first quarter
    /// through the last quarter's year, with planted missingness.
    pub esg: Vec<EsgRecord>,
    /// Planted latents and shares.
    pub truth: GroundTruth,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Weekdays from `from` to `to` inclusive.
fn weekday_calendar(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = from;
    while d <= to {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

// rng stream ids, one per generation purpose
const STREAM_LATENT: u64 = 0;
const STREAM_FUNDS: u64 = 1;
const STREAM_HOLDINGS: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_PRICES: u64 = 4;
const STREAM_ESG: u64 = 5;
const STREAM_GAPS: u64 = 6;
const STREAM_SHARES: u64 = 7;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates the full synthetic dataset for a config.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let quarters = config.quarters();
    let asset_ids: Vec<AssetId> =
        (1..=config.n_assets).map(|i| format!("A{i:04}")).collect();

    // latent loadings s ~ U[-1, 1] and the partially correlated ESG
    // latent v = 0.3 s + sqrt(1 - 0.09) eta
    let mut rng = stream(config.rng_seed, STREAM_LATENT);
    let latent: Vec<f64> = (0..config.n_assets).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let esg_latent: Vec<f64> = latent
        .iter()
        .map(|s| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            0.3 * s + (1.0f64 - 0.09).sqrt() * eta
        })
        .collect();

    // funds: Article 9 first, then 8, then 6
    let mut rng = stream(config.rng_seed, STREAM_FUNDS);
    let aum_dist = LogNormal::new(500.0f64.ln(), 1.0).expect("valid lognormal");
    let mut funds = Vec::new();
    let labels = [
        (SfdrLabel::Art9, config.n_art9),
        (SfdrLabel::Art8, config.n_art8),
        (SfdrLabel::Art6, config.n_art6),
    ];
    let mut fund_no = 0usize;
    for (label, count) in labels {
        for _ in 0..count {
            fund_no += 1;
            let id: FundId = format!("F{fund_no:03}");
            funds.push(FundMeta::new(id, label, aum_dist.sample(&mut rng))?);
        }
    }

    // holdings: membership Bernoulli per (fund, quarter, asset), weights
    // symmetric Dirichlet (unit concentration) over the held set
    let base = logit(config.base_hold_rate);
    let p_art9: Vec<f64> =
        latent.iter().map(|s| logistic(base + config.hold_link * s)).collect();
    let p_other = config.base_hold_rate;
    let mut member_rng = stream(config.rng_seed, STREAM_HOLDINGS);
    let mut weight_rng = stream(config.rng_seed, STREAM_WEIGHTS);
    let mut snapshots = Vec::with_capacity(funds.len() * quarters.len());
    for fund in &funds {
        let art9 = fund.sfdr_label == SfdrLabel::Art9;
        for &quarter in &quarters {
            let mut held: Vec<usize> = (0..config.n_assets)
                .filter(|&i| {
                    let p = if art9 { p_art9[i] } else { p_other };
                    member_rng.gen::<f64>() < p
                })
                .collect();
            if held.is_empty() {
                held.push(member_rng.gen_range(0..config.n_assets));
            }
            let raw: Vec<f64> = held.iter().map(|_| weight_rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            let positions: BTreeMap<AssetId, f64> = held
                .iter()
                .zip(&raw)
                .map(|(&i, w)| (asset_ids[i].clone(), w / total))
                .collect();
            snapshots.push(HoldingsSnapshot::new(fund.fund_id.clone(), quarter, positions)?);
        }
    }

    // planted holdings gaps: isolated interior removals at gap_rate, plus
    // two double gaps when the panel is long enough
    let mut gap_rng = stream(config.rng_seed, STREAM_GAPS);
    let nq = quarters.len();
    let mut removed: std::collections::BTreeSet<(FundId, Quarter)> = Default::default();
    if config.gap_rate > 0.0 && nq >= 3 {
        for fund in &funds {
            for qi in 1..nq - 1 {
                let gap_here = gap_rng.gen::<f64>() < config.gap_rate;
                let prev_ok = !removed.contains(&(fund.fund_id.clone(), quarters[qi - 1]));
                if gap_here && prev_ok {
                    removed.insert((fund.fund_id.clone(), quarters[qi]));
                }
            }
        }
        // re-scan: drop any removal whose neighbor also got removed, so
        // every planted gap is isolated
        let singles: Vec<(FundId, Quarter)> = removed
            .iter()
            .filter(|(f, q)| {
                !removed.contains(&(f.clone(), q.prev())) && !removed.contains(&(f.clone(), q.next()))
            })
            .cloned()
            .collect();
        removed = singles.into_iter().collect();
        if nq >= 8 {
            for fi in [0, funds.len() / 2] {
                let f = &funds[fi].fund_id;
                let qa = quarters[nq / 3];
                let qb = quarters[nq / 3 + 1];
                // evict random singles touching the double so it stays
                // a run of exactly two
                removed.remove(&(f.clone(), qa.prev()));
                removed.remove(&(f.clone(), qb.next()));
                removed.insert((f.clone(), qa));
                removed.insert((f.clone(), qb));
            }
        }
    }
    let snapshots: Vec<HoldingsSnapshot> = snapshots
        .into_iter()
        .filter(|s| !removed.contains(&(s.fund_id.clone(), s.quarter)))
        .collect();
    let panel = HoldingsPanel::new(snapshots, funds)?;

    // prices: close_{t+1} = close_t (1 + r), r = drift/250 + beta f + eps
    let calendar = weekday_calendar(
        quarters[0].start_date(),
        quarters[nq - 1].end_date(),
    );
    let mut price_rng = stream(config.rng_seed, STREAM_PRICES);
    let betas: Vec<f64> = (0..config.n_assets).map(|_| price_rng.gen_range(0.8..1.2)).collect();
    let p0_dist = LogNormal::new(50.0f64.ln(), 0.3).expect("valid lognormal");
    let p0: Vec<f64> = (0..config.n_assets).map(|_| p0_dist.sample(&mut price_rng)).collect();
    let daily_market_sd = config.market_vol / DAYS_PER_YEAR.sqrt();
    let daily_idio_sd = config.idio_vol / DAYS_PER_YEAR.sqrt();
    let factor: Vec<f64> = (0..calendar.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut price_rng);
            z * daily_market_sd
        })
        .collect();
    let mut closes: Vec<Vec<f64>> = Vec::with_capacity(config.n_assets);
    for i in 0..config.n_assets {
        let drift = (config.market_drift + config.drift_link * latent[i]) / DAYS_PER_YEAR;
        let mut series = Vec::with_capacity(calendar.len());
        let mut p = p0[i];
        for f in &factor {
            series.push(p);
            let z: f64 = StandardNormal.sample(&mut price_rng);
            let r = (drift + betas[i] * f + daily_idio_sd * z).max(-0.9);
            p *= 1.0 + r;
        }
        closes.push(series);
    }
    // planted 5-day price holes on a fraction of assets
    let mut hole: Vec<Option<usize>> = vec![None; config.n_assets];
    if config.price_gap_rate > 0.0 && calendar.len() > 20 {
        for h in hole.iter_mut() {
            if gap_rng.gen::<f64>() < config.price_gap_rate {
                *h = Some(gap_rng.gen_range(5..calendar.len() - 10));
            }
        }
    }
    let mut prices = BTreeMap::new();
    for (i, id) in asset_ids.iter().enumerate() {
        let (mut dates, mut vals) = (Vec::new(), Vec::new());
        for (t, &d) in calendar.iter().enumerate() {
            if let Some(start) = hole[i] {
                if (start..start + 5).contains(&t) {
                    continue;
                }
            }
            dates.push(d);
            vals.push(closes[i][t]);
        }
        prices.insert(id.clone(), PriceSeries::new(id.clone(), dates, vals)?);
    }

    // annual ESG records: year before the first quarter through the last
    let mut esg_rng = stream(config.rng_seed, STREAM_ESG);
    let year_lo = quarters[0].year - 1;
    let year_hi = quarters[nq - 1].year;
    let noise = Normal::new(0.0, 3.0).expect("valid normal");
    let mut esg = Vec::new();
    for (i, id) in asset_ids.iter().enumerate() {
        let v = esg_latent[i];
        let sector = GICS_SECTORS[esg_rng.gen_range(0..GICS_SECTORS.len())].to_string();
        let size_i: f64 = 8.0 + 1.2 * esg_rng.sample::<f64, _>(StandardNormal);
        for year in year_lo..=year_hi {
            if esg_rng.gen::<f64>() < config.esg_missing_rate {
                // record dropped for the whole year; consume no cell draws
                continue;
            }
            let score = (50.0 + 20.0 * v + noise.sample(&mut esg_rng)).clamp(0.0, 100.0);
            let green = (20.0 + 30.0 * v.max(0.0)
                + 5.0 * esg_rng.sample::<f64, _>(StandardNormal))
            .clamp(0.0, 100.0);
            let emission_ratio = (-1.5 * v + 0.5 * esg_rng.sample::<f64, _>(StandardNormal)).exp();
            let total_assets = size_i.exp();
            let board = (30.0 + 8.0 * v + 6.0 * esg_rng.sample::<f64, _>(StandardNormal))
                .clamp(0.0, 60.0);
            let controversies =
                (70.0 + 10.0 * v + 10.0 * esg_rng.sample::<f64, _>(StandardNormal))
                    .clamp(0.0, 100.0);
            let target = esg_rng.gen::<f64>() < logistic(1.2 * v + 0.2);
            let human = esg_rng.gen::<f64>() < logistic(0.8 * v + 0.5);
            let arma = esg_rng.gen::<f64>() < logistic(-0.5 * v - 1.5);
            let pb = (0.7 + 0.4 * esg_rng.sample::<f64, _>(StandardNormal)).exp();
            let roe = 0.10 + 0.08 * esg_rng.sample::<f64, _>(StandardNormal);
            let pe = (2.7 + 0.4 * esg_rng.sample::<f64, _>(StandardNormal)).exp();
            let dy = (0.02 + 0.012 * esg_rng.sample::<f64, _>(StandardNormal)).abs();
            // one planted-missingness draw per optional covariate cell
            let miss: Vec<bool> = (0..12)
                .map(|_| esg_rng.gen::<f64>() < config.covariate_missing_rate)
                .collect();
            let keep = |m: bool, v: f64| (!m).then_some(v);
            let keep_flag = |m: bool, v: bool| (!m).then_some(u8::from(v));
            let rec = EsgRecord {
                asset_id: id.clone(),
                year,
                esg_score: score,
                pillar_e: None,
                pillar_s: None,
                pillar_g: None,
                green_revenues: keep(miss[0], green),
                std_total_emission: keep(
                    miss[1],
                    standardized_emission(emission_ratio * total_assets, total_assets),
                ),
                target_reduction: keep_flag(miss[2], target),
                board_diversity: keep(miss[3], board),
                human_policy_rights: keep_flag(miss[4], human),
                armaments: keep_flag(miss[5], arma),
                esg_controversies: keep(miss[6], controversies),
                size: keep(miss[7], size_i),
                pb_ratio: keep(miss[8], pb),
                roe: keep(miss[9], roe),
                pe_ratio: keep(miss[10], pe),
                dividend_yield: keep(miss[11], dy),
                gics_sector: Some(sector.clone()),
            };
            rec.validate()?;
            esg.push(rec);
        }
    }

    // shares outstanding for cap-proxy benchmarks
    let mut share_rng = stream(config.rng_seed, STREAM_SHARES);
    let share_dist = LogNormal::new(1.0e7f64.ln(), 1.0).expect("valid lognormal");
    let shares: BTreeMap<AssetId, f64> = asset_ids
        .iter()
        .map(|id| (id.clone(), share_dist.sample(&mut share_rng)))
        .collect();
    let latent_map: BTreeMap<AssetId, f64> =
        asset_ids.iter().cloned().zip(latent.iter().copied()).collect();

    Ok(SynthOutput {
        panel,
        prices,
        esg,
        truth: GroundTruth { latent: latent_map, shares },
    })
}

/// Writes the five CSV files (`holdings.csv`, `funds.csv`, `prices.csv`,
/// `esg.csv`, `ground_truth.csv`) into a directory, creating it if
/// needed. Returns the file paths written.
pub fn write_synth_csvs(out: &SynthOutput, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("funds.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "fund_id,sfdr_label,aum_mln")?;
    for fund in out.panel.funds() {
        writeln!(f, "{},{},{}", fund.fund_id, fund.sfdr_label.as_csv(), fund.aum)?;
    }
    written.push(path);

    let path = dir.join("holdings.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "fund_id,quarter,asset_id,weight")?;
    for snap in out.panel.snapshots() {
        for (asset, w) in &snap.positions {
            writeln!(f, "{},{},{},{}", snap.fund_id, snap.quarter, asset, w)?;
        }
    }
    written.push(path);

    let path = dir.join("prices.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "asset_id,date,close")?;
    for series in out.prices.values() {
        for (d, p) in series.dates.iter().zip(&series.prices) {
            writeln!(f, "{},{},{}", series.asset_id, d, p)?;
        }
    }
    written.push(path);

    let path = dir.join("esg.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "{}", ESG_COLUMNS.join(","))?;
    fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map(|x| x.to_string()).unwrap_or_default()
    }
    for r in &out.esg {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.asset_id,
            r.year,
            r.esg_score,
            opt(&r.green_revenues),
            opt(&r.std_total_emission),
            opt(&r.target_reduction),
            opt(&r.board_diversity),
            opt(&r.human_policy_rights),
            opt(&r.armaments),
            opt(&r.esg_controversies),
            opt(&r.size),
            opt(&r.pb_ratio),
            opt(&r.roe),
            opt(&r.pe_ratio),
            opt(&r.dividend_yield),
            opt(&r.gics_sector),
        )?;
    }
    written.push(path);

    let path = dir.join("ground_truth.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "asset_id,latent_s,shares_outstanding")?;
    for (id, s) in &out.truth.latent {
        writeln!(f, "{},{},{}", id, s, out.truth.shares[id])?;
    }
    written.push(path);

    Ok(written)
}

/// Reads `ground_truth.csv` back (asset -> (latent, shares)).
pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<AssetId, (f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let asset = rec
            .get(0)
            .ok_or_else(|| Error::Validation("ground_truth row missing asset_id".into()))?
            .to_string();
        let s: f64 = rec
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Validation(format!("bad latent_s for {asset}")))?;
        let sh: f64 = rec
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Validation(format!("bad shares_outstanding for {asset}")))?;
        out.insert(asset, (s, sh));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_config() -> SynthConfig {
        SynthConfig {
            n_assets: 20,
            n_art9: 3,
            n_art8: 6,
            n_art6: 3,
            n_quarters: 4,
            hold_link: 3.0,
            gap_rate: 0.0,
            price_gap_rate: 0.0,
            esg_missing_rate: 0.0,
            covariate_missing_rate: 0.0,
            rng_seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        assert!(SynthConfig { n_assets: 0, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { n_art9: 0, ..SynthConfig::default() }.validate().is_err());
        assert!(
            SynthConfig { n_art8: 0, n_art6: 0, ..SynthConfig::default() }.validate().is_err()
        );
        assert!(
            SynthConfig { base_hold_rate: 0.0, ..SynthConfig::default() }.validate().is_err()
        );
        assert!(SynthConfig { gap_rate: 1.5, ..SynthConfig::default() }.validate().is_err());
        assert!(
            SynthConfig { market_vol: f64::NAN, ..SynthConfig::default() }.validate().is_err()
        );
    }

    #[test]
    fn logistic_inverts_logit() {
        for p in [0.01, 0.15, 0.5, 0.85, 0.99] {
            assert!((logistic(logit(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn calendar_is_weekdays_only() {
        let from = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(); // Friday
        let to = NaiveDate::from_ymd_opt(2021, 1, 11).unwrap(); // Monday
        let days: Vec<u32> = weekday_calendar(from, to).iter().map(|d| d.day()).collect();
        assert_eq!(days, vec![1, 4, 5, 6, 7, 8, 11]);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = mini_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.truth.latent, b.truth.latent);
        assert_eq!(a.truth.shares, b.truth.shares);
        assert_eq!(a.panel.len(), b.panel.len());
        for (id, pa) in &a.prices {
            let pb = &b.prices[id];
            assert_eq!(pa.dates, pb.dates);
            assert_eq!(pa.prices, pb.prices);
        }
        assert_eq!(a.esg.len(), b.esg.len());

        let c = generate(&SynthConfig { rng_seed: 12, ..cfg }).unwrap();
        assert_ne!(a.truth.latent, c.truth.latent);
    }

    #[test]
    fn generated_data_is_structurally_coherent() {
        let cfg = mini_config();
        let out = generate(&cfg).unwrap();

        assert_eq!(out.truth.latent.len(), cfg.n_assets);
        assert!(out.truth.latent.values().all(|s| (-1.0..=1.0).contains(s)));
        assert!(out.truth.shares.values().all(|s| *s > 0.0));

        assert_eq!(out.panel.funds().count(), 12);
        // No gaps planted: every fund has a snapshot in every quarter.
        assert_eq!(out.panel.len(), 12 * cfg.n_quarters);

        assert_eq!(out.prices.len(), cfg.n_assets);
        for series in out.prices.values() {
            assert!(series.prices.iter().all(|p| *p > 0.0));
        }

        // ESG coverage runs from the year before the first quarter
        // through the last quarter's year.
        let years: std::collections::BTreeSet<i32> = out.esg.iter().map(|e| e.year).collect();
        assert_eq!(years.first(), Some(&2009));
        assert_eq!(years.last(), Some(&2010));
        assert_eq!(out.esg.len(), cfg.n_assets * years.len());
    }

    #[test]
    fn hold_link_tilts_article9_membership_toward_high_latents() {
        let out = generate(&mini_config()).unwrap();
        let high: Vec<&AssetId> =
            out.truth.latent.iter().filter(|(_, s)| **s > 0.5).map(|(a, _)| a).collect();
        let low: Vec<&AssetId> =
            out.truth.latent.iter().filter(|(_, s)| **s < -0.5).map(|(a, _)| a).collect();
        assert!(!high.is_empty() && !low.is_empty());

        let hold_rate = |assets: &[&AssetId], label: SfdrLabel| -> f64 {
            let mut held = 0usize;
            let mut total = 0usize;
            for snap in out.panel.snapshots() {
                if out.panel.fund(&snap.fund_id).unwrap().sfdr_label != label {
                    continue;
                }
                for a in assets {
                    total += 1;
                    if snap.positions.get(*a).is_some_and(|w| *w > 0.0) {
                        held += 1;
                    }
                }
            }
            held as f64 / total as f64
        };

        let art9_spread = hold_rate(&high, SfdrLabel::Art9) - hold_rate(&low, SfdrLabel::Art9);
        let art8_spread = hold_rate(&high, SfdrLabel::Art8) - hold_rate(&low, SfdrLabel::Art8);
        // Planted link is strong (b = 3): the Article 9 spread must be
        // large while the unlinked groups stay near zero.
        assert!(art9_spread > 0.3, "art9 spread {art9_spread}");
        assert!(art8_spread.abs() < 0.15, "art8 spread {art8_spread}");
    }
}
