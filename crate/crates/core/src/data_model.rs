//! Holdings panel, fund metadata, ESG records, and price series, plus the
//! alignment step that derives per-quarter eligible asset universes.
//!
//! All containers are immutable after construction and safe to share across
//! threads. CSV schemas are documented on the corresponding `load_*` /
//! `write_*` functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque fund identifier.
pub type FundId = String;
/// Opaque asset identifier.
pub type AssetId = String;

/// Tolerance allowed above 1.0 for a snapshot's weight sum (cash and
/// non-equity remainder make sums below 1.0 routine; above is an error).
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Calendar quarters
// ---------------------------------------------------------------------------

/// A calendar quarter, e.g. `2010Q1`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Quarter {
    /// Calendar year.
    pub year: i32,
    /// Quarter number, 1 through 4.
    pub q: u8,
}

impl Quarter {
    /// Builds a quarter, rejecting quarter numbers outside 1..=4.
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Validation(format!("quarter number {q} not in 1..=4")));
        }
        Ok(Quarter { year, q })
    }

    /// First calendar day of the quarter.
    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, (self.q as u32 - 1) * 3 + 1, 1)
            .expect("quarter start is always a valid date")
    }

    /// Last calendar day of the quarter.
    pub fn end_date(&self) -> NaiveDate {
        self.next().start_date().pred_opt().expect("valid date")
    }

    /// The following quarter.
    pub fn next(&self) -> Quarter {
        if self.q == 4 {
            Quarter { year: self.year + 1, q: 1 }
        } else {
            Quarter { year: self.year, q: self.q + 1 }
        }
    }

    /// The preceding quarter.
    pub fn prev(&self) -> Quarter {
        if self.q == 1 {
            Quarter { year: self.year - 1, q: 4 }
        } else {
            Quarter { year: self.year, q: self.q - 1 }
        }
    }

    /// Quarter containing the given date.
    pub fn containing(date: NaiveDate) -> Quarter {
        Quarter { year: date.year(), q: ((date.month0() / 3) + 1) as u8 }
    }

    /// Monotone integer index (quarters since year 0), used for gap arithmetic.
    pub fn index(&self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Parses the `YYYYQn` form, e.g. `2015Q3`.
    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Validation(format!("bad quarter {s:?}, expected YYYYQn"));
        let (y, q) = s.split_once(['Q', 'q']).ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        let qn: u8 = q.parse().map_err(|_| err())?;
        Quarter::new(year, qn)
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Funds and holdings
// ---------------------------------------------------------------------------

/// SFDR disclosure class of a fund.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum SfdrLabel {
    /// Article 6: no sustainability scope.
    Art6,
    /// Article 8: promotes environmental or social characteristics.
    Art8,
    /// Article 9: sustainable investment objective.
    Art9,
    /// No SFDR status available.
    Unlabeled,
}

impl SfdrLabel {
    /// Parses the CSV encoding `6 | 8 | 9 | NA`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "6" => Ok(SfdrLabel::Art6),
            "8" => Ok(SfdrLabel::Art8),
            "9" => Ok(SfdrLabel::Art9),
            "NA" => Ok(SfdrLabel::Unlabeled),
            other => Err(Error::Validation(format!("unknown SFDR label {other:?}"))),
        }
    }

    /// CSV encoding.
    pub fn as_csv(&self) -> &'static str {
        match self {
            SfdrLabel::Art6 => "6",
            SfdrLabel::Art8 => "8",
            SfdrLabel::Art9 => "9",
            SfdrLabel::Unlabeled => "NA",
        }
    }
}

/// Static description of one fund.
///
/// The SFDR label is a single 2023-vintage attribute applied retrospectively
/// to every quarter; no label history is modeled.
#[derive(Clone, Debug)]
pub struct FundMeta {
    /// Fund identifier.
    pub fund_id: FundId,
    /// SFDR disclosure class.
    pub sfdr_label: SfdrLabel,
    /// Assets under management in millions; informational only.
    pub aum: f64,
}

impl FundMeta {
    /// Builds fund metadata, rejecting negative AUM.
    pub fn new(fund_id: FundId, sfdr_label: SfdrLabel, aum: f64) -> Result<Self> {
        if !(aum >= 0.0) {
            return Err(Error::Validation(format!("fund {fund_id}: aum {aum} must be >= 0")));
        }
        Ok(FundMeta { fund_id, sfdr_label, aum })
    }
}

/// One fund's portfolio composition in one quarter.
///
/// Weights are fractions of fund NAV. Long-only positions are assumed, and
/// the sum may fall short of 1 (cash or assets outside coverage).
#[derive(Clone, Debug)]
pub struct HoldingsSnapshot {
    /// Owning fund.
    pub fund_id: FundId,
    /// Quarter of the composition.
    pub quarter: Quarter,
    /// Asset weights; an asset counts as held iff its weight is > 0.
    pub positions: BTreeMap<AssetId, f64>,
}

impl HoldingsSnapshot {
    /// Builds a snapshot, enforcing non-negative weights and a weight sum
    /// of at most 1 + [`WEIGHT_SUM_TOL`].
    pub fn new(fund_id: FundId, quarter: Quarter, positions: BTreeMap<AssetId, f64>) -> Result<Self> {
        for (asset, w) in &positions {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Validation(format!(
                    "fund {fund_id} {quarter}: weight {w} for asset {asset} must be finite and >= 0"
                )));
            }
        }
        let sum: f64 = positions.values().sum();
        if sum > 1.0 + WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!(
                "fund {fund_id} {quarter}: weights sum to {sum}, exceeding 1"
            )));
        }
        Ok(HoldingsSnapshot { fund_id, quarter, positions })
    }
}

/// The full holdings dataset: snapshots, fund metadata, and imputation flags.
#[derive(Clone, Debug, Default)]
pub struct HoldingsPanel {
    snapshots: BTreeMap<(FundId, Quarter), HoldingsSnapshot>,
    funds: BTreeMap<FundId, FundMeta>,
    imputed: BTreeSet<(FundId, Quarter)>,
}

impl HoldingsPanel {
    /// Assembles a panel from parts, enforcing snapshot uniqueness per
    /// (fund, quarter) and that every snapshot's fund has metadata.
    pub fn new(snapshots: Vec<HoldingsSnapshot>, funds: Vec<FundMeta>) -> Result<Self> {
        let mut fund_map = BTreeMap::new();
        for f in funds {
            if fund_map.insert(f.fund_id.clone(), f).is_some() {
                return Err(Error::Validation("duplicate fund_id in funds".into()));
            }
        }
        let mut snap_map = BTreeMap::new();
        for s in snapshots {
            if !fund_map.contains_key(&s.fund_id) {
                return Err(Error::Validation(format!(
                    "snapshot references unknown fund {}",
                    s.fund_id
                )));
            }
            let key = (s.fund_id.clone(), s.quarter);
            if let Some(prev) = snap_map.insert(key, s) {
                return Err(Error::Validation(format!(
                    "duplicate snapshot ({}, {})",
                    prev.fund_id, prev.quarter
                )));
            }
        }
        Ok(HoldingsPanel { snapshots: snap_map, funds: fund_map, imputed: BTreeSet::new() })
    }

    /// All snapshots in (fund, quarter) order.
    pub fn snapshots(&self) -> impl Iterator<Item = &HoldingsSnapshot> {
        self.snapshots.values()
    }

    /// Snapshot of one fund in one quarter, if present.
    pub fn snapshot(&self, fund: &str, quarter: Quarter) -> Option<&HoldingsSnapshot> {
        self.snapshots.get(&(fund.to_owned(), quarter))
    }

    /// Fund metadata in fund-id order.
    pub fn funds(&self) -> impl Iterator<Item = &FundMeta> {
        self.funds.values()
    }

    /// Metadata for one fund.
    pub fn fund(&self, fund: &str) -> Option<&FundMeta> {
        self.funds.get(fund)
    }

    /// (fund, quarter) pairs whose snapshot was filled by imputation.
    pub fn imputed_flags(&self) -> &BTreeSet<(FundId, Quarter)> {
        &self.imputed
    }

    /// Sorted set of quarters with at least one snapshot.
    pub fn quarters(&self) -> BTreeSet<Quarter> {
        self.snapshots.keys().map(|(_, q)| *q).collect()
    }

    /// Funds of the given labels holding a snapshot in `quarter`, in
    /// fund-id order.
    pub fn funds_in_quarter(&self, quarter: Quarter, labels: &[SfdrLabel]) -> Vec<&HoldingsSnapshot> {
        self.funds
            .values()
            .filter(|f| labels.contains(&f.sfdr_label))
            .filter_map(|f| self.snapshots.get(&(f.fund_id.clone(), quarter)))
            .collect()
    }

    /// Number of snapshots.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    /// True when the panel has no snapshots.
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Fills isolated missing quarters per fund with a copy of the previous
/// quarter's snapshot and flags them; runs of two or more missing quarters
/// are left missing. Presence is judged on the input panel, which makes the
/// operation idempotent.
pub fn impute_single_gaps(panel: &HoldingsPanel) -> HoldingsPanel {
    let mut out = panel.clone();
    for fund in panel.funds.keys() {
        let present: Vec<Quarter> = panel
            .snapshots
            .range((fund.clone(), Quarter { year: i32::MIN, q: 1 })..=(fund.clone(), Quarter { year: i32::MAX, q: 4 }))
            .map(|((_, q), _)| *q)
            .collect();
        for pair in present.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.index() - a.index() == 2 {
                let gap = a.next();
                let mut snap = panel.snapshots[&(fund.clone(), a)].clone();
                snap.quarter = gap;
                out.snapshots.insert((fund.clone(), gap), snap);
                out.imputed.insert((fund.clone(), gap));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Prices
// ---------------------------------------------------------------------------

/// Daily close prices for one asset.
#[derive(Clone, Debug)]
pub struct PriceSeries {
    /// Asset identifier.
    pub asset_id: AssetId,
    /// Strictly increasing trading dates.
    pub dates: Vec<NaiveDate>,
    /// Strictly positive closes, same length as `dates`.
    pub prices: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series, enforcing matched lengths, strictly increasing
    /// dates, and strictly positive prices.
    pub fn new(asset_id: AssetId, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::Validation(format!(
                "asset {asset_id}: {} dates vs {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!("asset {asset_id}: dates not strictly increasing")));
        }
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Validation(format!("asset {asset_id}: prices must be finite and > 0")));
        }
        Ok(PriceSeries { asset_id, dates, prices })
    }
}

/// The union of all assets' trading dates, sorted ascending.
#[derive(Clone, Debug)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
    index: BTreeMap<NaiveDate, usize>,
}

impl TradingCalendar {
    /// Builds the calendar from a set of price series.
    pub fn from_prices<'a>(prices: impl Iterator<Item = &'a PriceSeries>) -> Self {
        let set: BTreeSet<NaiveDate> = prices.flat_map(|p| p.dates.iter().copied()).collect();
        let dates: Vec<NaiveDate> = set.into_iter().collect();
        let index = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        TradingCalendar { dates, index }
    }

    /// All dates.
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Number of dates.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    /// True when the calendar is empty.
    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Position of an exact date.
    pub fn index_of(&self, d: NaiveDate) -> Option<usize> {
        self.index.get(&d).copied()
    }

    /// Position of the first date on or after `d`.
    pub fn first_on_or_after(&self, d: NaiveDate) -> Option<usize> {
        let i = self.dates.partition_point(|x| *x < d);
        (i < self.dates.len()).then_some(i)
    }
}

// ---------------------------------------------------------------------------
// ESG records
// ---------------------------------------------------------------------------

/// Annual ESG score and covariates for one asset.
#[derive(Clone, Debug, Default)]
pub struct EsgRecord {
    /// Asset identifier.
    pub asset_id: AssetId,
    /// Score year.
    pub year: i32,
    /// Overall ESG score, 0 (worst) to 100 (best).
    pub esg_score: f64,
    /// Optional environmental pillar score (not carried by the CSV schema).
    pub pillar_e: Option<f64>,
    /// Optional social pillar score (not carried by the CSV schema).
    pub pillar_s: Option<f64>,
    /// Optional governance pillar score (not carried by the CSV schema).
    pub pillar_g: Option<f64>,
    /// Share of revenues from green activities, percent.
    pub green_revenues: Option<f64>,
    /// Standardized emission figure, log(1 + total emission / total assets).
    pub std_total_emission: Option<f64>,
    /// 1 when the company has an emission-reduction target.
    pub target_reduction: Option<u8>,
    /// Share of women on the board, percent.
    pub board_diversity: Option<f64>,
    /// 1 when a human-rights policy is in place.
    pub human_policy_rights: Option<u8>,
    /// 1 when the company is involved in armaments.
    pub armaments: Option<u8>,
    /// Controversies score, 0 (most controversial) to 100.
    pub esg_controversies: Option<f64>,
    /// Company size, log of total assets.
    pub size: Option<f64>,
    /// Price-to-book ratio.
    pub pb_ratio: Option<f64>,
    /// Return on equity.
    pub roe: Option<f64>,
    /// Price-to-earnings ratio.
    pub pe_ratio: Option<f64>,
    /// Dividend yield.
    pub dividend_yield: Option<f64>,
    /// GICS sector name; empty cell means missing.
    pub gics_sector: Option<String>,
}

impl EsgRecord {
    /// Validates score ranges and binary flags.
    pub fn validate(&self) -> Result<()> {
        let ctx = || format!("asset {} year {}", self.asset_id, self.year);
        if !(0.0..=100.0).contains(&self.esg_score) {
            return Err(Error::Validation(format!("{}: esg_score {} not in [0,100]", ctx(), self.esg_score)));
        }
        if let Some(c) = self.esg_controversies {
            if !(0.0..=100.0).contains(&c) {
                return Err(Error::Validation(format!("{}: esg_controversies {c} not in [0,100]", ctx())));
            }
        }
        for (name, v) in [
            ("target_reduction", self.target_reduction),
            ("human_policy_rights", self.human_policy_rights),
            ("armaments", self.armaments),
        ] {
            if let Some(b) = v {
                if b > 1 {
                    return Err(Error::Validation(format!("{}: {name} {b} not in {{0,1}}", ctx())));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn field<'a>(path: &Path, rec: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str> {
    rec.get(idx)
        .ok_or_else(|| parse_err(path, record_line(rec), format!("missing column {name}")))
}

fn parse_f64(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let s = field(path, rec, idx, name)?;
    s.parse()
        .map_err(|_| parse_err(path, record_line(rec), format!("bad {name} value {s:?}")))
}

fn parse_opt_f64(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
    let s = field(path, rec, idx, name)?;
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| parse_err(path, record_line(rec), format!("bad {name} value {s:?}")))
}

fn parse_opt_flag(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<u8>> {
    let s = field(path, rec, idx, name)?;
    if s.is_empty() {
        return Ok(None);
    }
    match s {
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        _ => Err(parse_err(path, record_line(rec), format!("bad {name} value {s:?}, expected 0 or 1"))),
    }
}

/// Loads and validates a holdings panel.
///
/// `funds.csv` schema: `fund_id,sfdr_label(6|8|9|NA),aum_mln`.
/// `holdings.csv` schema: `fund_id,quarter(YYYYQn),asset_id,weight` with
/// weights as decimal fractions of fund NAV.
///
/// Rows violating invariants are rejected with file, line, and key context.
pub fn load_panel(holdings_path: &Path, funds_path: &Path) -> Result<HoldingsPanel> {
    // Funds first, so holdings rows can be checked against known ids.
    let mut funds = Vec::new();
    let mut rdr = open_reader(funds_path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(funds_path, 0, e.to_string()))?;
        let line = record_line(&rec);
        let fund_id = field(funds_path, &rec, 0, "fund_id")?.to_owned();
        if fund_id.is_empty() {
            return Err(parse_err(funds_path, line, "empty fund_id"));
        }
        let label = SfdrLabel::parse(field(funds_path, &rec, 1, "sfdr_label")?)
            .map_err(|e| parse_err(funds_path, line, e.to_string()))?;
        let aum = parse_f64(funds_path, &rec, 2, "aum_mln")?;
        funds.push(FundMeta::new(fund_id, label, aum).map_err(|e| parse_err(funds_path, line, e.to_string()))?);
    }

    let fund_ids: BTreeSet<&str> = funds.iter().map(|f| f.fund_id.as_str()).collect();

    // Holdings rows, grouped into snapshots keyed by (fund, quarter).
    let mut grouped: BTreeMap<(FundId, Quarter), BTreeMap<AssetId, f64>> = BTreeMap::new();
    let mut rdr = open_reader(holdings_path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(holdings_path, 0, e.to_string()))?;
        let line = record_line(&rec);
        let fund_id = field(holdings_path, &rec, 0, "fund_id")?.to_owned();
        let quarter: Quarter = field(holdings_path, &rec, 1, "quarter")?
            .parse()
            .map_err(|e: Error| parse_err(holdings_path, line, e.to_string()))?;
        let asset_id = field(holdings_path, &rec, 2, "asset_id")?.to_owned();
        if asset_id.is_empty() {
            return Err(parse_err(holdings_path, line, "empty asset_id"));
        }
        let weight = parse_f64(holdings_path, &rec, 3, "weight")?;
        if !fund_ids.contains(fund_id.as_str()) {
            return Err(parse_err(holdings_path, line, format!("unknown fund {fund_id}")));
        }
        let positions = grouped.entry((fund_id.clone(), quarter)).or_default();
        if positions.insert(asset_id.clone(), weight).is_some() {
            return Err(parse_err(
                holdings_path,
                line,
                format!("duplicate holding ({fund_id}, {quarter}, {asset_id})"),
            ));
        }
    }

    let mut snapshots = Vec::with_capacity(grouped.len());
    for ((fund_id, quarter), positions) in grouped {
        snapshots.push(HoldingsSnapshot::new(fund_id, quarter, positions)?);
    }
    HoldingsPanel::new(snapshots, funds)
}

/// Loads daily prices keyed by asset.
///
/// `prices.csv` schema: `asset_id,date(ISO-8601),close`. Rows may arrive in
/// any order; duplicate (asset, date) pairs are rejected.
pub fn load_prices(path: &Path) -> Result<BTreeMap<AssetId, PriceSeries>> {
    let mut grouped: BTreeMap<AssetId, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut rdr = open_reader(path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        let asset_id = field(path, &rec, 0, "asset_id")?.to_owned();
        let date_s = field(path, &rec, 1, "date")?;
        let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d")
            .map_err(|_| parse_err(path, line, format!("bad date {date_s:?}")))?;
        let close = parse_f64(path, &rec, 2, "close")?;
        if grouped.entry(asset_id.clone()).or_default().insert(date, close).is_some() {
            return Err(parse_err(path, line, format!("duplicate price ({asset_id}, {date})")));
        }
    }
    let mut out = BTreeMap::new();
    for (asset_id, by_date) in grouped {
        let (dates, prices): (Vec<_>, Vec<_>) = by_date.into_iter().unzip();
        out.insert(asset_id.clone(), PriceSeries::new(asset_id, dates, prices)?);
    }
    Ok(out)
}

/// Column order of `esg.csv`.
pub const ESG_COLUMNS: [&str; 16] = [
    "asset_id",
    "year",
    "esg_score",
    "green_revenues",
    "std_total_emission",
    "target_reduction",
    "board_diversity",
    "human_policy_rights",
    "armaments",
    "esg_controversies",
    "size",
    "pb_ratio",
    "roe",
    "pe_ratio",
    "dividend_yield",
    "gics_sector",
];

/// Loads annual ESG records.
///
/// Schema per [`ESG_COLUMNS`]; an empty cell means the covariate is missing.
/// Duplicate (asset, year) pairs are rejected.
pub fn load_esg(path: &Path) -> Result<Vec<EsgRecord>> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<(AssetId, i32)> = BTreeSet::new();
    let mut rdr = open_reader(path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = record_line(&rec);
        let asset_id = field(path, &rec, 0, "asset_id")?.to_owned();
        let year: i32 = field(path, &rec, 1, "year")?
            .parse()
            .map_err(|_| parse_err(path, line, "bad year"))?;
        if !seen.insert((asset_id.clone(), year)) {
            return Err(parse_err(path, line, format!("duplicate ESG record ({asset_id}, {year})")));
        }
        let sector = field(path, &rec, 15, "gics_sector")?;
        let record = EsgRecord {
            asset_id,
            year,
            esg_score: parse_f64(path, &rec, 2, "esg_score")?,
            pillar_e: None,
            pillar_s: None,
            pillar_g: None,
            green_revenues: parse_opt_f64(path, &rec, 3, "green_revenues")?,
            std_total_emission: parse_opt_f64(path, &rec, 4, "std_total_emission")?,
            target_reduction: parse_opt_flag(path, &rec, 5, "target_reduction")?,
            board_diversity: parse_opt_f64(path, &rec, 6, "board_diversity")?,
            human_policy_rights: parse_opt_flag(path, &rec, 7, "human_policy_rights")?,
            armaments: parse_opt_flag(path, &rec, 8, "armaments")?,
            esg_controversies: parse_opt_f64(path, &rec, 9, "esg_controversies")?,
            size: parse_opt_f64(path, &rec, 10, "size")?,
            pb_ratio: parse_opt_f64(path, &rec, 11, "pb_ratio")?,
            roe: parse_opt_f64(path, &rec, 12, "roe")?,
            pe_ratio: parse_opt_f64(path, &rec, 13, "pe_ratio")?,
            dividend_yield: parse_opt_f64(path, &rec, 14, "dividend_yield")?,
            gics_sector: (!sector.is_empty()).then(|| sector.to_owned()),
        };
        record.validate().map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

/// Completeness window specification for [`align_dataset`].
///
/// For each quarter with holdings, an asset's prices must cover every
/// calendar trading date from `lookback_days` trading days before the
/// quarter's first trading day through the next quarter's first trading day
/// (or the end of data). `lookback_days = 0` requires the holding quarter
/// only; optimizer backtests need a calibration window on top.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentSpec {
    /// Trading days of history required before the quarter's first trading day.
    pub lookback_days: usize,
}

/// Why an asset is or is not eligible in a quarter.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum EligibilityReason {
    /// Held, scored, and price-complete.
    Eligible,
    /// No ESG record for the quarter's year or the year before.
    MissingEsg,
    /// Price series does not cover the completeness window.
    IncompletePrices,
}

/// An asset's ESG value resolved for a quarter.
#[derive(Clone, Copy, Debug)]
pub struct EsgValue {
    /// Overall score used.
    pub value: f64,
    /// True when the score came from the prior year.
    pub fallback: bool,
}

/// Eligible universe of one quarter plus per-asset reasons.
#[derive(Clone, Debug)]
pub struct QuarterUniverse {
    /// The quarter.
    pub quarter: Quarter,
    /// Assets passing all three eligibility conditions, sorted.
    pub eligible: BTreeSet<AssetId>,
    /// Reason per candidate asset (candidates = assets held that quarter).
    pub reasons: BTreeMap<AssetId, EligibilityReason>,
    /// Resolved ESG score per eligible asset.
    pub esg: BTreeMap<AssetId, EsgValue>,
    /// Calendar index of the quarter's first trading day (rebalance day).
    pub rebalance_idx: usize,
    /// Calendar index of the next quarter's first trading day, or the last
    /// in-quarter date when the data ends; the holding window is
    /// `rebalance_idx..=hold_end_idx`.
    pub hold_end_idx: usize,
}

/// Analysis-ready dataset: validated panel, price matrix on the union
/// calendar, ESG lookup, and per-quarter eligible universes.
#[derive(Clone, Debug)]
pub struct AlignedDataset {
    /// The holdings panel.
    pub panel: HoldingsPanel,
    /// Union trading calendar of all price series.
    pub calendar: TradingCalendar,
    /// Assets with a price series, sorted; column order of `price_matrix`.
    pub asset_ids: Vec<AssetId>,
    /// Position of each asset in `asset_ids`.
    pub asset_index: BTreeMap<AssetId, usize>,
    /// Row per calendar date, column per asset; NaN where no price exists.
    pub price_matrix: Vec<Vec<f64>>,
    /// ESG records keyed by (asset, year).
    pub esg: BTreeMap<(AssetId, i32), EsgRecord>,
    /// Per-quarter universes for every quarter with holdings.
    pub universes: BTreeMap<Quarter, QuarterUniverse>,
    /// The window specification used to build the universes.
    pub spec: AlignmentSpec,
}

impl AlignedDataset {
    /// Universe of a quarter; an absent or empty universe is an explicit
    /// error rather than a silent miss.
    pub fn universe(&self, quarter: Quarter) -> Result<&QuarterUniverse> {
        match self.universes.get(&quarter) {
            Some(u) if !u.eligible.is_empty() => Ok(u),
            _ => Err(Error::EmptyUniverse { quarter }),
        }
    }

    /// Price of an asset at a calendar index, if it exists.
    pub fn price_at(&self, asset: &str, idx: usize) -> Option<f64> {
        let col = *self.asset_index.get(asset)?;
        let p = self.price_matrix[idx][col];
        p.is_finite().then_some(p)
    }

    /// ESG score for a quarter: the quarter's year, falling back one year.
    pub fn esg_for_quarter(&self, asset: &str, quarter: Quarter) -> Option<EsgValue> {
        let key = (asset.to_owned(), quarter.year);
        if let Some(rec) = self.esg.get(&key) {
            return Some(EsgValue { value: rec.esg_score, fallback: false });
        }
        let prev = (asset.to_owned(), quarter.year - 1);
        self.esg
            .get(&prev)
            .map(|rec| EsgValue { value: rec.esg_score, fallback: true })
    }
}

/// Validates records and keys them by (asset, year), rejecting duplicates.
pub fn esg_by_year(records: Vec<EsgRecord>) -> Result<BTreeMap<(AssetId, i32), EsgRecord>> {
    let mut esg = BTreeMap::new();
    for rec in records {
        rec.validate()?;
        let key = (rec.asset_id.clone(), rec.year);
        if esg.insert(key, rec).is_some() {
            return Err(Error::Validation("duplicate (asset, year) ESG record".into()));
        }
    }
    Ok(esg)
}

/// Aligns holdings, prices, and ESG into per-quarter eligible universes.
///
/// An asset is eligible in a quarter when it (a) is held by at least one
/// fund with a snapshot that quarter, (b) has an ESG record for the
/// quarter's year or the year before, and (c) has complete prices over the
/// window given by `spec`. Universes may be empty; consumers asking for one
/// through [`AlignedDataset::universe`] get an explicit error.
pub fn align_dataset(
    panel: HoldingsPanel,
    prices: BTreeMap<AssetId, PriceSeries>,
    esg_records: Vec<EsgRecord>,
    spec: AlignmentSpec,
) -> Result<AlignedDataset> {
    let calendar = TradingCalendar::from_prices(prices.values());
    let asset_ids: Vec<AssetId> = prices.keys().cloned().collect();
    let asset_index: BTreeMap<AssetId, usize> =
        asset_ids.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();

    let mut price_matrix = vec![vec![f64::NAN; asset_ids.len()]; calendar.len()];
    // Calendar index of each asset's dates, for O(log) completeness checks.
    let mut coverage: Vec<Vec<usize>> = vec![Vec::new(); asset_ids.len()];
    for (asset, series) in &prices {
        let col = asset_index[asset];
        let mut idxs = Vec::with_capacity(series.dates.len());
        for (d, p) in series.dates.iter().zip(&series.prices) {
            let row = calendar.index_of(*d).expect("calendar contains every price date");
            price_matrix[row][col] = *p;
            idxs.push(row);
        }
        coverage[col] = idxs;
    }

    let esg = esg_by_year(esg_records)?;

    let complete_over = |col: usize, lo: usize, hi: usize| -> bool {
        let idxs = &coverage[col];
        let a = idxs.partition_point(|i| *i < lo);
        let b = idxs.partition_point(|i| *i <= hi);
        b - a == hi - lo + 1
    };

    let mut universes = BTreeMap::new();
    for quarter in panel.quarters() {
        // Candidates: assets held (weight > 0) by some fund that quarter.
        let mut candidates: BTreeSet<AssetId> = BTreeSet::new();
        for snap in panel.snapshots().filter(|s| s.quarter == quarter) {
            candidates.extend(snap.positions.iter().filter(|(_, w)| **w > 0.0).map(|(a, _)| a.clone()));
        }

        let rebalance_idx = calendar.first_on_or_after(quarter.start_date());
        let next_start = calendar.first_on_or_after(quarter.next().start_date());
        let (rebalance_idx, hold_end_idx) = match rebalance_idx {
            Some(r) if calendar.dates()[r] <= quarter.end_date() => {
                let end = match next_start {
                    Some(n) => n,
                    None => calendar.len() - 1,
                };
                (r, end)
            }
            // No trading dates inside the quarter: nothing can be eligible.
            _ => {
                universes.insert(
                    quarter,
                    QuarterUniverse {
                        quarter,
                        eligible: BTreeSet::new(),
                        reasons: candidates
                            .into_iter()
                            .map(|a| (a, EligibilityReason::IncompletePrices))
                            .collect(),
                        esg: BTreeMap::new(),
                        rebalance_idx: 0,
                        hold_end_idx: 0,
                    },
                );
                continue;
            }
        };

        let window_lo = rebalance_idx.checked_sub(spec.lookback_days);
        let mut eligible = BTreeSet::new();
        let mut reasons = BTreeMap::new();
        let mut esg_vals = BTreeMap::new();
        for asset in candidates {
            let esg_val = match esg.get(&(asset.clone(), quarter.year)) {
                Some(rec) => Some(EsgValue { value: rec.esg_score, fallback: false }),
                None => esg
                    .get(&(asset.clone(), quarter.year - 1))
                    .map(|rec| EsgValue { value: rec.esg_score, fallback: true }),
            };
            let Some(esg_val) = esg_val else {
                reasons.insert(asset, EligibilityReason::MissingEsg);
                continue;
            };
            let complete = match (window_lo, asset_index.get(&asset)) {
                (Some(lo), Some(col)) => complete_over(*col, lo, hold_end_idx),
                _ => false,
            };
            if !complete {
                reasons.insert(asset, EligibilityReason::IncompletePrices);
                continue;
            }
            reasons.insert(asset.clone(), EligibilityReason::Eligible);
            esg_vals.insert(asset.clone(), esg_val);
            eligible.insert(asset);
        }
        universes.insert(
            quarter,
            QuarterUniverse { quarter, eligible, reasons, esg: esg_vals, rebalance_idx, hold_end_idx },
        );
    }

    Ok(AlignedDataset {
        panel,
        calendar,
        asset_ids,
        asset_index,
        price_matrix,
        esg,
        universes,
        spec,
    })
}
