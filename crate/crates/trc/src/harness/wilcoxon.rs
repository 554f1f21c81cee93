//! One-sided Wilcoxon signed-rank test for paired metrics.
//!
//! Differences `d = a - b` are ranked by magnitude with tie-averaged ranks;
//! the statistic is the rank sum of positive differences and the reported
//! p-value is `P(W >= w_observed)` under the null of symmetric signs. Up to
//! n = 20 the null distribution is enumerated exactly by dynamic programming
//! over doubled ranks (tie-averaged ranks are half-integers, so doubling
//! makes every achievable sum an integer); beyond that a normal
//! approximation with tie and continuity corrections takes over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::norm_cdf;

const EXACT_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Rank sum of positive differences (W+).
    pub statistic: f64,
    /// One-sided `P(W >= statistic)` under the null.
    pub p_value: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_used: usize,
    /// Whether the exact null distribution was enumerated.
    pub exact: bool,
}

/// Tie-averaged ranks of `|d|`, in the order the differences were given.
fn tied_ranks(diffs: &[f64]) -> Vec<f64> {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        diffs[a]
            .abs()
            .partial_cmp(&diffs[b].abs())
            .expect("finite differences")
    });
    let mut ranks = vec![0.0; n];
    let mut at = 0;
    while at < n {
        let mut end = at + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[at]].abs() {
            end += 1;
        }
        // Positions at..end (0-based) share ranks at+1 ..= end; assign the
        // average to each.
        let avg = (at + 1 + end) as f64 / 2.0;
        for &i in &order[at..end] {
            ranks[i] = avg;
        }
        at = end;
    }
    ranks
}

/// Exact `P(W >= w_plus)` by counting sign assignments. Ranks are doubled to
/// integers so subset sums stay exact.
fn exact_upper_tail(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w2 = (2.0 * w_plus).round() as usize;
    let favorable: u128 = counts[w2.min(total)..].iter().sum();
    let all: u128 = 1u128 << ranks.len();
    favorable as f64 / all as f64
}

/// Normal approximation with tie variance correction and a 0.5 continuity
/// correction on the upper tail.
fn approximate_upper_tail(diffs: &[f64], ranks: &[f64], w_plus: f64) -> Result<f64> {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    // Ties shrink the variance: subtract (t^3 - t)/48 per tie group.
    let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite differences"));
    let mut at = 0;
    while at < sorted.len() {
        let mut end = at + 1;
        while end < sorted.len() && sorted[end] == sorted[at] {
            end += 1;
        }
        let t = (end - at) as f64;
        var -= t * (t * t - 1.0) / 48.0;
        at = end;
    }
    if var <= 0.0 {
        return Err(Error::Stats(
            "degenerate variance: all differences are tied".into(),
        ));
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    Ok(1.0 - norm_cdf(z))
}

/// One-sided Wilcoxon signed-rank test on pairs `(a, b)` with `d = a - b`.
/// Small p-values support "a exceeds b". Zero differences are dropped; at
/// least five nonzero differences are required.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Stats("differences must be finite".into()));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::Stats(format!(
            "need at least 5 nonzero differences, have {n}"
        )));
    }
    let ranks = tied_ranks(&diffs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let exact = n <= EXACT_LIMIT;
    let p_value = if exact {
        exact_upper_tail(&ranks, w_plus)
    } else {
        approximate_upper_tail(&diffs, &ranks, w_plus)?
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value,
        n_used: n,
        exact,
    })
}
