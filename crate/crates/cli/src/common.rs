//! Flag parsing helpers shared by the subcommands.

use std::fmt;
use std::str::FromStr;

use smislab_core::Quarter;

/// Environment variable that overrides every `--seed` flag.
pub const SEED_ENV: &str = "SMISLAB_SEED";

/// A bad flag or environment value; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Builds the global rayon pool with the requested thread count.
pub fn init_thread_pool(jobs: usize) -> anyhow::Result<()> {
    if jobs == 0 {
        return Err(UsageError("--jobs must be >= 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool setup failed: {e}"))
}

/// Resolves the effective seed: the `SMISLAB_SEED` environment variable
/// wins over the flag, the flag over `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}")).into()),
        Err(std::env::VarError::NotPresent) => Ok(flag.unwrap_or(fallback)),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(UsageError(format!("{SEED_ENV} is not valid unicode")).into())
        }
    }
}

/// An inclusive quarter interval, parsed from `2011Q1` (a single
/// quarter) or `2011Q1:2013Q4`.
#[derive(Clone, Copy, Debug)]
pub struct QuarterRange {
    pub first: Quarter,
    pub last: Quarter,
}

impl QuarterRange {
    pub fn contains(&self, q: Quarter) -> bool {
        self.first <= q && q <= self.last
    }
}

impl FromStr for QuarterRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = match s.split_once(':') {
            Some((a, b)) => (a, b),
            None => (s, s),
        };
        let first: Quarter = a.trim().parse().map_err(|e| format!("{e}"))?;
        let last: Quarter = b.trim().parse().map_err(|e| format!("{e}"))?;
        if first > last {
            return Err(format!("empty quarter range {first}:{last}"));
        }
        Ok(QuarterRange { first, last })
    }
}

impl fmt::Display for QuarterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}:{}", self.first, self.last)
        }
    }
}

/// Quarters of `all` inside `range`, in order; `None` keeps everything.
pub fn filter_quarters(
    all: impl IntoIterator<Item = Quarter>,
    range: Option<&QuarterRange>,
) -> Vec<Quarter> {
    all.into_iter().filter(|q| range.map_or(true, |r| r.contains(*q))).collect()
}
