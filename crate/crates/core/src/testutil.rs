//! Helpers shared by this crate's tests and the acceptance suite.
//! Not part of the public API.

use chrono::{Datelike, NaiveDate, Weekday};

/// Visits every point of the n-simplex whose coordinates are multiples of
/// 1/steps (an exhaustive composition walk; C(steps + n - 1, n - 1)
/// points). The slice passed to the callback is reused between calls.
pub fn simplex_grid<F: FnMut(&[f64])>(n: usize, steps: usize, mut f: F) {
    assert!(n >= 1 && steps >= 1);
    let mut counts = vec![0usize; n];
    let mut w = vec![0.0; n];
    walk(0, steps, &mut counts, &mut w, steps, &mut f);
}

fn walk<F: FnMut(&[f64])>(
    i: usize,
    remaining: usize,
    counts: &mut [usize],
    w: &mut [f64],
    steps: usize,
    f: &mut F,
) {
    if i + 1 == counts.len() {
        counts[i] = remaining;
        for (wi, &c) in w.iter_mut().zip(counts.iter()) {
            *wi = c as f64 / steps as f64;
        }
        f(w);
        return;
    }
    for c in 0..=remaining {
        counts[i] = c;
        walk(i + 1, remaining - c, counts, w, steps, f);
    }
}

/// First `n` weekdays starting at `start`.
pub fn weekday_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid_counts_and_sums() {
        let mut count = 0usize;
        simplex_grid(3, 4, |w| {
            count += 1;
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        });
        // C(4 + 2, 2) = 15 compositions of 4 into 3 parts
        assert_eq!(count, 15);
    }

    #[test]
    fn weekday_dates_skip_weekends() {
        let dates = weekday_dates(NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(), 4);
        // Jan 5 2024 is a Friday; the next weekdays are Mon 8, Tue 9, Wed 10.
        let want: Vec<NaiveDate> = [(1, 5), (1, 8), (1, 9), (1, 10)]
            .iter()
            .map(|&(m, d)| NaiveDate::from_ymd_opt(2024, m, d).unwrap())
            .collect();
        assert_eq!(dates, want);
    }
}
