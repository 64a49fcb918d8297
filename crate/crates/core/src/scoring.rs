//! SMIS and SMISw scores per asset per quarter, with significance tests.
//!
//! SMIS contrasts the fraction of Article 9 funds holding an asset with the
//! fraction of Article 6/8 funds holding it; SMISw contrasts mean portfolio
//! weights across the same two groups. Tests are two-sided; the 90% level
//! is reported as `p < 0.10`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::data_model::{AssetId, HoldingsPanel, Quarter, SfdrLabel};
use crate::error::{Error, Result};

/// Significance level used for the `significant_90` flags.
pub const SIGNIFICANCE_LEVEL: f64 = 0.10;

/// Fund-count-based score for one asset in one quarter.
#[derive(Clone, Debug)]
pub struct SmisScore {
    /// Asset identifier.
    pub asset_id: AssetId,
    /// Quarter of the underlying snapshots.
    pub quarter: Quarter,
    /// Fraction of Article 9 funds holding the asset.
    pub p9: f64,
    /// Fraction of Article 6/8 funds holding the asset.
    pub p_other: f64,
    /// p9 - p_other, in [-1, 1].
    pub smis: f64,
    /// Article 9 funds with a snapshot this quarter.
    pub n1: usize,
    /// Article 6/8 funds with a snapshot this quarter.
    pub n2: usize,
    /// Article 9 holders.
    pub s1: usize,
    /// Article 6/8 holders.
    pub s2: usize,
    /// Two-proportion z statistic; None when the pooled proportion is 0 or 1.
    pub z_stat: Option<f64>,
    /// Two-sided p-value; None when the test is degenerate.
    pub p_value: Option<f64>,
    /// True when the test is available and p < 0.10.
    pub significant_90: bool,
}

/// Weight-based score for one asset in one quarter.
///
/// Group means include non-holders as zero weights.
#[derive(Clone, Debug)]
pub struct SmiswScore {
    /// Asset identifier.
    pub asset_id: AssetId,
    /// Quarter of the underlying snapshots.
    pub quarter: Quarter,
    /// Mean weight across Article 9 funds.
    pub w9: f64,
    /// Mean weight across Article 6/8 funds.
    pub w_other: f64,
    /// w9 - w_other.
    pub smisw: f64,
    /// Sample variance of weights among Article 9 funds (0 when n1 < 2).
    pub s1_var: f64,
    /// Sample variance of weights among Article 6/8 funds (0 when n2 < 2).
    pub s2_var: f64,
    /// Pooled-variance t statistic; None when the pooled variance is 0.
    pub t_stat: Option<f64>,
    /// Degrees of freedom, n1 + n2 - 2.
    pub dof: usize,
    /// Two-sided p-value; None when the test is degenerate.
    pub p_value: Option<f64>,
    /// True when the test is available and p < 0.10.
    pub significant_90: bool,
}

/// Merged per-(asset, quarter) score row.
#[derive(Clone, Debug)]
pub struct ScoreRow {
    /// Count-based score and test.
    pub smis: SmisScore,
    /// Weight-based score and test.
    pub smisw: SmiswScore,
}

/// Concatenated scores over several quarters, with per-quarter gaps
/// recorded instead of failing the whole computation.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    /// Rows ordered by (quarter, asset).
    pub rows: Vec<ScoreRow>,
    /// Quarters that could not be scored, with the reason.
    pub gaps: Vec<(Quarter, String)>,
}

impl ScoreTable {
    /// SMIS value for one (asset, quarter), if scored.
    pub fn smis(&self, asset: &str, quarter: Quarter) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.smis.quarter == quarter && r.smis.asset_id == asset)
            .map(|r| r.smis.smis)
    }

    /// All rows of one quarter.
    pub fn quarter_rows(&self, quarter: Quarter) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(move |r| r.smis.quarter == quarter)
    }
}

/// Two-proportion z-test with pooled proportion.
///
/// Returns the z statistic and the two-sided normal p-value. The pooled
/// proportion (s1+s2)/(n1+n2) must lie strictly inside (0, 1); otherwise
/// the test is degenerate and an [`Error::DegenerateTest`] is returned so
/// callers can report the score with the test marked unavailable.
pub fn smis_test(s1: usize, n1: usize, s2: usize, n2: usize) -> Result<(f64, f64)> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Validation("smis_test: group sizes must be >= 1".into()));
    }
    if s1 > n1 || s2 > n2 {
        return Err(Error::Validation(format!(
            "smis_test: holder counts ({s1}, {s2}) exceed group sizes ({n1}, {n2})"
        )));
    }
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::DegenerateTest(format!("pooled proportion {pooled} is 0 or 1")));
    }
    let p1 = s1 as f64 / n1 as f64;
    let p2 = s2 as f64 / n2 as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    // Two-sided normal tail: 2 * (1 - Phi(|z|)) = erfc(|z| / sqrt(2)).
    let p = erfc(z.abs() / std::f64::consts::SQRT_2);
    Ok((z, p))
}

/// Pooled-variance two-sample t-test on group summary statistics.
///
/// Variances are sample variances (denominator n-1); groups of size 1
/// contribute zero to the pooled sum. Returns (t, p, dof). Errors:
/// [`Error::DegreesOfFreedom`] when n1 + n2 <= 2, [`Error::DegenerateTest`]
/// when the pooled variance is zero.
pub fn smisw_test(
    n1: usize,
    mean1: f64,
    var1: f64,
    n2: usize,
    mean2: f64,
    var2: f64,
) -> Result<(f64, f64, usize)> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Validation("smisw_test: group sizes must be >= 1".into()));
    }
    if n1 + n2 <= 2 {
        return Err(Error::DegreesOfFreedom { dof: n1 as i64 + n2 as i64 - 2, n1, n2 });
    }
    let dof = n1 + n2 - 2;
    let pooled_var =
        ((n1 as f64 - 1.0) * var1 + (n2 as f64 - 1.0) * var2) / dof as f64;
    if pooled_var <= 0.0 {
        return Err(Error::DegenerateTest("zero pooled variance".into()));
    }
    let se = pooled_var.sqrt() * (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    let t = (mean1 - mean2) / se;
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Validation(format!("smisw_test: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p, dof))
}

/// The two fund groups of a quarter: Article 9 snapshots and Article 6/8
/// snapshots. Unlabeled funds belong to neither group.
fn quarter_groups(
    panel: &HoldingsPanel,
    quarter: Quarter,
) -> Result<(Vec<&crate::data_model::HoldingsSnapshot>, Vec<&crate::data_model::HoldingsSnapshot>)> {
    let g9 = panel.funds_in_quarter(quarter, &[SfdrLabel::Art9]);
    let gu = panel.funds_in_quarter(quarter, &[SfdrLabel::Art6, SfdrLabel::Art8]);
    if g9.is_empty() {
        return Err(Error::EmptyGroup { group: "Art9", quarter });
    }
    if gu.is_empty() {
        return Err(Error::EmptyGroup { group: "Art6/8", quarter });
    }
    Ok((g9, gu))
}

/// Assets held (weight > 0) by at least one fund in either group, sorted.
fn held_assets(
    g9: &[&crate::data_model::HoldingsSnapshot],
    gu: &[&crate::data_model::HoldingsSnapshot],
) -> BTreeSet<AssetId> {
    let mut assets = BTreeSet::new();
    for snap in g9.iter().chain(gu.iter()) {
        assets.extend(snap.positions.iter().filter(|(_, w)| **w > 0.0).map(|(a, _)| a.clone()));
    }
    assets
}

/// Computes SMIS scores for every asset held that quarter.
///
/// Denominators are the funds with a snapshot in the quarter; an asset is
/// held iff its weight is strictly positive. Output is sorted by asset id.
pub fn compute_smis(panel: &HoldingsPanel, quarter: Quarter) -> Result<Vec<SmisScore>> {
    let (g9, gu) = quarter_groups(panel, quarter)?;
    let (n1, n2) = (g9.len(), gu.len());
    let mut out = Vec::new();
    for asset in held_assets(&g9, &gu) {
        let held = |snaps: &[&crate::data_model::HoldingsSnapshot]| {
            snaps
                .iter()
                .filter(|s| s.positions.get(&asset).is_some_and(|w| *w > 0.0))
                .count()
        };
        let (s1, s2) = (held(&g9), held(&gu));
        let p9 = s1 as f64 / n1 as f64;
        let p_other = s2 as f64 / n2 as f64;
        let (z_stat, p_value) = match smis_test(s1, n1, s2, n2) {
            Ok((z, p)) => (Some(z), Some(p)),
            Err(Error::DegenerateTest(_)) => (None, None),
            Err(e) => return Err(e),
        };
        out.push(SmisScore {
            asset_id: asset,
            quarter,
            p9,
            p_other,
            smis: p9 - p_other,
            n1,
            n2,
            s1,
            s2,
            z_stat,
            p_value,
            significant_90: p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
        });
    }
    Ok(out)
}

/// Computes SMISw scores for every asset held that quarter.
///
/// A fund not holding the asset contributes weight 0 to its group mean and
/// variance. Output is sorted by asset id.
pub fn compute_smisw(panel: &HoldingsPanel, quarter: Quarter) -> Result<Vec<SmiswScore>> {
    let (g9, gu) = quarter_groups(panel, quarter)?;
    let (n1, n2) = (g9.len(), gu.len());
    if n1 + n2 <= 2 {
        return Err(Error::DegreesOfFreedom { dof: n1 as i64 + n2 as i64 - 2, n1, n2 });
    }
    let mut out = Vec::new();
    for asset in held_assets(&g9, &gu) {
        let group_stats = |snaps: &[&crate::data_model::HoldingsSnapshot]| {
            let weights: Vec<f64> = snaps
                .iter()
                .map(|s| s.positions.get(&asset).copied().unwrap_or(0.0))
                .collect();
            let n = weights.len() as f64;
            let mean = weights.iter().sum::<f64>() / n;
            let var = if weights.len() < 2 {
                0.0
            } else {
                weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)
            };
            (mean, var)
        };
        let (w9, s1_var) = group_stats(&g9);
        let (w_other, s2_var) = group_stats(&gu);
        let (t_stat, p_value, dof) = match smisw_test(n1, w9, s1_var, n2, w_other, s2_var) {
            Ok((t, p, dof)) => (Some(t), Some(p), dof),
            Err(Error::DegenerateTest(_)) => (None, None, n1 + n2 - 2),
            Err(e) => return Err(e),
        };
        out.push(SmiswScore {
            asset_id: asset,
            quarter,
            w9,
            w_other,
            smisw: w9 - w_other,
            s1_var,
            s2_var,
            t_stat,
            dof,
            p_value,
            significant_90: p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
        });
    }
    Ok(out)
}

/// Scores every requested quarter, recording unscorable quarters as gaps
/// instead of failing the whole table.
pub fn score_history(panel: &HoldingsPanel, quarters: &[Quarter]) -> ScoreTable {
    let mut table = ScoreTable::default();
    for &quarter in quarters {
        let pair = compute_smis(panel, quarter)
            .and_then(|smis| compute_smisw(panel, quarter).map(|smisw| (smis, smisw)));
        match pair {
            Ok((smis, smisw)) => {
                debug_assert_eq!(smis.len(), smisw.len());
                for (a, b) in smis.into_iter().zip(smisw) {
                    debug_assert_eq!(a.asset_id, b.asset_id);
                    table.rows.push(ScoreRow { smis: a, smisw: b });
                }
            }
            Err(e) => table.gaps.push((quarter, e.to_string())),
        }
    }
    table
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a score table as CSV with the schema
/// `asset_id,quarter,smis,p9,p_other,z,p_value,smisw,w9,w_other,t,p_value_w`.
/// Unavailable tests are written as empty cells.
pub fn write_scores_csv(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "asset_id,quarter,smis,p9,p_other,z,p_value,smisw,w9,w_other,t,p_value_w")?;
    for row in &table.rows {
        let s = &row.smis;
        let w = &row.smisw;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.asset_id,
            s.quarter,
            s.smis,
            s.p9,
            s.p_other,
            fmt_opt(s.z_stat),
            fmt_opt(s.p_value),
            w.smisw,
            w.w9,
            w.w_other,
            fmt_opt(w.t_stat),
            fmt_opt(w.p_value),
        )?;
    }
    Ok(())
}

/// Reads a scores CSV produced by [`write_scores_csv`] back into
/// (asset, quarter) -> (smis, smisw, significant flag) triples.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(AssetId, Quarter, f64, f64, bool)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or_default();
        let asset: AssetId = get(0).to_owned();
        let quarter: Quarter = get(1).parse()?;
        let smis: f64 = get(2)
            .parse()
            .map_err(|_| Error::Validation(format!("bad smis value {:?}", get(2))))?;
        let smisw: f64 = get(7)
            .parse()
            .map_err(|_| Error::Validation(format!("bad smisw value {:?}", get(7))))?;
        let sig = match get(6) {
            "" => false,
            p => p
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad p_value {:?}", get(6))))?
                < SIGNIFICANCE_LEVEL,
        };
        out.push((asset, quarter, smis, smisw, sig));
    }
    Ok(out)
}
