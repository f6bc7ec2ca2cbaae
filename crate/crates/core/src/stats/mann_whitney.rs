use serde::Serialize;
use statrs::function::erf::erfc;

use super::{average_ranks, check_finite, StatsError};

/// Pooled sizes above this are refused by the exact test.
const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MwMode {
    /// Permutation distribution of the rank sum, conditional on ties.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Approx,
    /// Exact when the pooled size is at most the given bound.
    Auto { exact_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U for the first sample: pairs with `a > b`, plus half the ties.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwMode) -> Result<MannWhitney, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(a)?;
    check_finite(b)?;
    let n = a.len();
    let m = b.len();
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;

    let exact = match mode {
        MwMode::Exact => true,
        MwMode::Approx => false,
        MwMode::Auto { exact_max } => n + m <= exact_max,
    };
    let p_value = if exact {
        exact_p(&ranks, n)?
    } else {
        approx_p(&pooled, u, n, m)
    };
    Ok(MannWhitney { u, p_value, exact })
}

/// Counts, by dynamic programming over doubled (integer) mid-ranks, how many
/// size-`n` subsets reach each rank sum, then sums the two-sided tail.
fn exact_p(ranks: &[f64], n: usize) -> Result<f64, StatsError> {
    let total = ranks.len();
    if total > EXACT_LIMIT {
        return Err(StatsError::ExactTooLarge(total));
    }
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0.0f64; max_sum + 1]; n + 1];
    ways[0][0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for k in (1..=n).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let from = &lower[k - 1];
            let to = &mut upper[0];
            for s in (r..=reach.min(max_sum)).rev() {
                to[s] += from[s - r];
            }
        }
    }
    let observed: usize = doubled[..n].iter().sum();
    // 2U = doubled sum - n(n+1); centre of 2U is n*m
    let m = total - n;
    let centre = (n * m) as i64;
    let offset = (n * (n + 1)) as i64;
    let deviation = |s: usize| (s as i64 - offset - centre).abs();
    let threshold = deviation(observed);
    let mut tail = 0.0;
    let mut all = 0.0;
    for (s, &count) in ways[n].iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        all += count;
        if deviation(s) >= threshold {
            tail += count;
        }
    }
    Ok((tail / all).min(1.0))
}

fn approx_p(pooled: &[f64], u: f64, n: usize, m: usize) -> f64 {
    let total = (n + m) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nm = (n * m) as f64;
    let variance = if total > 1.0 {
        nm / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)))
    } else {
        0.0
    };
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u - nm / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
