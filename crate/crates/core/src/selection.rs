//! Preselection strategies mapping an (ESG, SMIS) cross-section to
//! over-weight and under-weight asset sets.
//!
//! S1/S2 rank on a single score. S3-S5 pick bivariate quantile corners:
//! the probability grid is walked until a corner first holds at least k
//! assets, then trimmed back to exactly k by dropping the assets closest
//! to the corner boundary. The quadrant plane is ESG on the vertical axis
//! (upper = high ESG) and SMIS on the horizontal (right = high SMIS).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::{AssetId, Quarter};
use crate::error::{Error, Result};

/// Number of grid steps for the default quadrant walk: probabilities
/// i/200 for i = 1..=199, i.e. 0.005 to 0.995 in 0.005 steps.
pub const DEFAULT_GRID_STEPS: usize = 200;

/// The five named strategies plus the random control.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum StrategyKind {
    /// S1: rank on ESG, both sides.
    TopEsg,
    /// S2: rank on SMIS, both sides.
    TopSmis,
    /// S3: over = upper-right corner, under = lower-left.
    CornersTT,
    /// S4: over = upper-left corner, under = lower-right.
    CornersTB,
    /// S5: over = lower-right corner, under = upper-left.
    CornersBT,
    /// Seeded uniform draws, disjoint sides.
    Random,
}

/// A strategy instance: kind plus per-side count and (for Random) a seed.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct StrategySpec {
    /// Which strategy.
    pub kind: StrategyKind,
    /// Assets per side.
    pub k: usize,
    /// Seed, present iff kind is Random.
    pub seed: Option<u64>,
}

impl StrategySpec {
    /// Builds a spec, enforcing k >= 1 and the seed-iff-Random invariant.
    pub fn new(kind: StrategyKind, k: usize, seed: Option<u64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("strategy k must be >= 1".into()));
        }
        if (kind == StrategyKind::Random) != seed.is_some() {
            return Err(Error::Validation(
                "strategy seed must be present exactly when kind is Random".into(),
            ));
        }
        Ok(StrategySpec { kind, k, seed })
    }

    /// Short label used in CSV exports and CLI flags.
    pub fn label(&self) -> &'static str {
        match self.kind {
            StrategyKind::TopEsg => "esg",
            StrategyKind::TopSmis => "smis",
            StrategyKind::CornersTT => "tt",
            StrategyKind::CornersTB => "tb",
            StrategyKind::CornersBT => "bt",
            StrategyKind::Random => "random",
        }
    }
}

/// Disjoint over/under sets of size exactly k each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionResult {
    /// Assets to over-weight.
    pub over: BTreeSet<AssetId>,
    /// Assets to under-weight.
    pub under: BTreeSet<AssetId>,
}

impl SelectionResult {
    /// Builds a result, enforcing exact sizes and disjointness.
    pub fn new(over: BTreeSet<AssetId>, under: BTreeSet<AssetId>, k: usize) -> Result<Self> {
        if over.len() != k || under.len() != k {
            return Err(Error::Validation(format!(
                "selection sides must have exactly {k} assets, got {} over / {} under",
                over.len(),
                under.len()
            )));
        }
        if let Some(a) = over.intersection(&under).next() {
            return Err(Error::OverlappingSelection(format!("asset {a} on both sides")));
        }
        Ok(SelectionResult { over, under })
    }
}

/// Ranking direction for [`rank_select`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    /// Largest scores.
    Top,
    /// Smallest scores.
    Bottom,
}

/// Quadrant corners of the (SMIS = x, ESG = y) plane.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Corner {
    /// Low ESG, low SMIS.
    LowerLeft,
    /// High ESG, high SMIS.
    UpperRight,
    /// High ESG, low SMIS.
    UpperLeft,
    /// Low ESG, high SMIS.
    LowerRight,
}

/// Per-axis tail direction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Tail {
    Low,
    High,
}

impl Corner {
    /// (ESG tail, SMIS tail) of the corner.
    fn tails(self) -> (Tail, Tail) {
        match self {
            Corner::LowerLeft => (Tail::Low, Tail::Low),
            Corner::UpperRight => (Tail::High, Tail::High),
            Corner::UpperLeft => (Tail::High, Tail::Low),
            Corner::LowerRight => (Tail::Low, Tail::High),
        }
    }
}

/// The k largest (Top) or smallest (Bottom) assets by score, ties broken
/// by ascending asset id. Requires at least 2k finitely scored assets.
pub fn rank_select(
    scores: &BTreeMap<AssetId, f64>,
    k: usize,
    direction: Direction,
) -> Result<BTreeSet<AssetId>> {
    if k == 0 {
        return Err(Error::Validation("rank_select k must be >= 1".into()));
    }
    let mut scored: Vec<(&AssetId, f64)> =
        scores.iter().filter(|(_, v)| v.is_finite()).map(|(a, v)| (a, *v)).collect();
    if scored.len() < 2 * k {
        return Err(Error::InsufficientUniverse { needed: 2 * k, available: scored.len() });
    }
    match direction {
        Direction::Top => scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))),
        Direction::Bottom => scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0))),
    }
    Ok(scored[..k].iter().map(|(a, _)| (*a).clone()).collect())
}

/// Per-asset 1-based rank toward a tail: ascending positions for the low
/// tail, descending for the high tail, score ties resolved by asset id in
/// the ascending sort. Rank 1 is deepest in the tail.
fn tail_ranks(scores: &BTreeMap<AssetId, f64>, tail: Tail) -> BTreeMap<&AssetId, usize> {
    let mut sorted: Vec<(&AssetId, f64)> = scores.iter().map(|(a, v)| (a, *v)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let n = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(pos, (a, _))| {
            let rank = match tail {
                Tail::Low => pos + 1,
                Tail::High => n - pos,
            };
            (a, rank)
        })
        .collect()
}

/// Selects the k assets of the requested corner via the probability-grid
/// walk with the default 0.005 resolution.
pub fn quadrant_select(
    esg: &BTreeMap<AssetId, f64>,
    smis: &BTreeMap<AssetId, f64>,
    k: usize,
    corner: Corner,
) -> Result<BTreeSet<AssetId>> {
    quadrant_select_with_grid(esg, smis, k, corner, DEFAULT_GRID_STEPS)
}

/// [`quadrant_select`] with a configurable grid of probabilities i/steps,
/// i = 1..steps.
///
/// At grid point i, the corner holds the assets strictly beyond the type-1
/// marginal quantile on both axes: score < Q(i/steps) for a low tail,
/// score > Q(1 - i/steps) for a high tail. The first grid index where the
/// corner reaches k assets wins; overshoot is trimmed to exactly k by
/// dropping the assets closest to the corner boundary, measured by the
/// maximum over the two axes of the tail rank (ties dropped by descending
/// asset id).
pub fn quadrant_select_with_grid(
    esg: &BTreeMap<AssetId, f64>,
    smis: &BTreeMap<AssetId, f64>,
    k: usize,
    corner: Corner,
    steps: usize,
) -> Result<BTreeSet<AssetId>> {
    if k == 0 {
        return Err(Error::Validation("quadrant_select k must be >= 1".into()));
    }
    if steps < 2 {
        return Err(Error::Validation("quadrant grid needs at least 2 steps".into()));
    }
    if esg.len() != smis.len() || esg.keys().zip(smis.keys()).any(|(a, b)| a != b) {
        return Err(Error::Validation(
            "quadrant_select: ESG and SMIS maps must cover the same assets".into(),
        ));
    }
    if esg.values().chain(smis.values()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("quadrant_select: scores must be finite".into()));
    }
    let n = esg.len();
    if n < 2 * k {
        return Err(Error::InsufficientUniverse { needed: 2 * k, available: n });
    }

    let (esg_tail, smis_tail) = corner.tails();
    let mut esg_sorted: Vec<f64> = esg.values().copied().collect();
    esg_sorted.sort_by(f64::total_cmp);
    let mut smis_sorted: Vec<f64> = smis.values().copied().collect();
    smis_sorted.sort_by(f64::total_cmp);

    // Strict-inequality membership against the type-1 quantile at grid
    // index i; quantile order statistics are computed in exact integer
    // arithmetic: ceil(n * p) for p = i/steps is (n*i + steps - 1) / steps.
    let in_tail = |sorted: &[f64], tail: Tail, value: f64, i: usize| -> bool {
        match tail {
            Tail::Low => {
                let m = (n * i + steps - 1) / steps;
                value < sorted[m - 1]
            }
            Tail::High => {
                let m = (n * (steps - i) + steps - 1) / steps;
                value > sorted[m - 1]
            }
        }
    };

    let members_at = |i: usize| -> Vec<&AssetId> {
        esg.iter()
            .zip(smis.values())
            .filter(|((_, e), s)| {
                in_tail(&esg_sorted, esg_tail, **e, i) && in_tail(&smis_sorted, smis_tail, **s, i)
            })
            .map(|((a, _), _)| a)
            .collect()
    };

    let mut chosen: Option<Vec<&AssetId>> = None;
    let mut max_achievable = 0;
    for i in 1..steps {
        let members = members_at(i);
        max_achievable = max_achievable.max(members.len());
        if members.len() >= k {
            chosen = Some(members);
            break;
        }
    }
    let Some(members) = chosen else {
        return Err(Error::InfeasibleCorner { requested: k, max_achievable });
    };

    if members.len() == k {
        return Ok(members.into_iter().cloned().collect());
    }

    // Trim overshoot: entry level = max over the two axes of the tail rank;
    // keep the k deepest (smallest entry level), ties kept by ascending id.
    let esg_ranks = tail_ranks(esg, esg_tail);
    let smis_ranks = tail_ranks(smis, smis_tail);
    let mut with_entry: Vec<(usize, &AssetId)> = members
        .into_iter()
        .map(|a| (esg_ranks[a].max(smis_ranks[a]), a))
        .collect();
    with_entry.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(with_entry[..k].iter().map(|(_, a)| (*a).clone()).collect())
}

/// Draws k assets per side uniformly without replacement, sides disjoint,
/// deterministically from the seed.
pub fn random_select(universe: &BTreeSet<AssetId>, k: usize, seed: u64) -> Result<SelectionResult> {
    if universe.len() < 2 * k {
        return Err(Error::InsufficientUniverse { needed: 2 * k, available: universe.len() });
    }
    let mut ids: Vec<&AssetId> = universe.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first 2k slots end up a uniform draw
    // without replacement.
    for i in 0..2 * k {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let over: BTreeSet<AssetId> = ids[..k].iter().map(|a| (*a).clone()).collect();
    let under: BTreeSet<AssetId> = ids[k..2 * k].iter().map(|a| (*a).clone()).collect();
    SelectionResult::new(over, under, k)
}

/// A quarter's scored cross-section: ESG and SMIS per asset, same key set.
#[derive(Clone, Debug)]
pub struct CrossSection {
    /// ESG score per asset.
    pub esg: BTreeMap<AssetId, f64>,
    /// SMIS score per asset.
    pub smis: BTreeMap<AssetId, f64>,
}

impl CrossSection {
    /// Builds a cross-section, enforcing identical asset coverage.
    pub fn new(esg: BTreeMap<AssetId, f64>, smis: BTreeMap<AssetId, f64>) -> Result<Self> {
        if esg.len() != smis.len() || esg.keys().zip(smis.keys()).any(|(a, b)| a != b) {
            return Err(Error::Validation(
                "cross-section ESG and SMIS maps must cover the same assets".into(),
            ));
        }
        Ok(CrossSection { esg, smis })
    }

    /// Number of assets.
    pub fn len(&self) -> usize {
        self.esg.len()
    }

    /// True when no assets are present.
    pub fn is_empty(&self) -> bool {
        self.esg.is_empty()
    }

    /// Sorted asset ids.
    pub fn assets(&self) -> BTreeSet<AssetId> {
        self.esg.keys().cloned().collect()
    }
}

/// Runs one strategy on a cross-section.
pub fn build_selection(strategy: &StrategySpec, cross: &CrossSection) -> Result<SelectionResult> {
    let k = strategy.k;
    match strategy.kind {
        StrategyKind::TopEsg => SelectionResult::new(
            rank_select(&cross.esg, k, Direction::Top)?,
            rank_select(&cross.esg, k, Direction::Bottom)?,
            k,
        ),
        StrategyKind::TopSmis => SelectionResult::new(
            rank_select(&cross.smis, k, Direction::Top)?,
            rank_select(&cross.smis, k, Direction::Bottom)?,
            k,
        ),
        StrategyKind::CornersTT => SelectionResult::new(
            quadrant_select(&cross.esg, &cross.smis, k, Corner::UpperRight)?,
            quadrant_select(&cross.esg, &cross.smis, k, Corner::LowerLeft)?,
            k,
        ),
        StrategyKind::CornersTB => SelectionResult::new(
            quadrant_select(&cross.esg, &cross.smis, k, Corner::UpperLeft)?,
            quadrant_select(&cross.esg, &cross.smis, k, Corner::LowerRight)?,
            k,
        ),
        StrategyKind::CornersBT => SelectionResult::new(
            quadrant_select(&cross.esg, &cross.smis, k, Corner::LowerRight)?,
            quadrant_select(&cross.esg, &cross.smis, k, Corner::UpperLeft)?,
            k,
        ),
        StrategyKind::Random => {
            let seed = strategy
                .seed
                .ok_or_else(|| Error::Validation("random strategy without a seed".into()))?;
            random_select(&cross.assets(), k, seed)
        }
    }
}

/// Appends selection rows (`quarter,strategy,side,asset_id`) for one or
/// more quarters to a CSV file.
pub fn write_selection_csv(
    rows: &[(Quarter, String, SelectionResult)],
    path: &Path,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "quarter,strategy,side,asset_id")?;
    for (quarter, label, sel) in rows {
        for a in &sel.over {
            writeln!(f, "{quarter},{label},over,{a}")?;
        }
        for a in &sel.under {
            writeln!(f, "{quarter},{label},under,{a}")?;
        }
    }
    Ok(())
}
