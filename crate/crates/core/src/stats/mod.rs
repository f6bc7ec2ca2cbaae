//! Nonparametric statistics used by the attendance analyses.

mod grouping;
mod mann_whitney;
mod theil_sen;
mod trends;

pub use grouping::{grade_distribution, quintile_grouping, rank_grouping, GradeHistogram, PerformanceGroup, RankGrouping};
pub use mann_whitney::{mann_whitney_u, MannWhitney, MwMode};
pub use theil_sen::{pairwise_slopes, theil_sen};
pub use trends::{
    histogram, per_course_correlations, weekly_trend, CourseCorrelation, HistogramBin, WeeklyPoint,
};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined for constant input")]
    Constant,
    #[error("empty sample")]
    Empty,
    #[error("all time coordinates are equal")]
    DegenerateTime,
    #[error("exact test infeasible for {0} pooled observations")]
    ExactTooLarge(usize),
    #[error("non-finite value in input")]
    NonFinite,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let mx = mean(x).unwrap();
    let my = mean(y).unwrap();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Box-plot statistics. Fences sit one IQR beyond the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

impl BoxSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile by linear interpolation between order statistics of a sorted
/// slice (position `p * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_summary(values: &[f64]) -> Result<BoxSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(BoxSummary {
        n: sorted.len(),
        mean: mean(&sorted).unwrap(),
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        lower_fence: q1 - iqr,
        upper_fence: q3 + iqr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: rank by counting how many values are smaller and
    /// how many are equal, then the textbook Pearson formula.
    fn rank_oracle(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn spearman_monotone_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[5.0, 3.0, 1.0, -1.0, -9.0]).unwrap(), -1.0);
    }

    #[test]
    fn spearman_with_ties_matches_oracle() {
        let x = [1.0, 2.0, 2.0, 4.0];
        let y = [3.0, 1.0, 4.0, 4.0];
        let expected = pearson_oracle(&rank_oracle(&x), &rank_oracle(&y));
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
        assert_eq!(average_ranks(&x), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(3, 2)));
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFew { .. })));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::Constant));
    }

    #[test]
    fn box_summary_examples() {
        let b = box_summary(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3), (3.0, 2.0, 4.0));
        assert_eq!((b.lower_fence, b.upper_fence), (0.0, 6.0));
        assert_eq!(b.mean, 3.0);
        let c = box_summary(&[7.0, 7.0, 7.0]).unwrap();
        assert_eq!((c.q1, c.median, c.q3, c.lower_fence, c.upper_fence), (7.0, 7.0, 7.0, 7.0, 7.0));
        let s = box_summary(&[2.5]).unwrap();
        assert_eq!((s.n, s.mean, s.q1, s.upper_fence), (1, 2.5, 2.5, 2.5));
        assert_eq!(box_summary(&[]), Err(StatsError::Empty));
    }

    proptest! {
        #[test]
        fn spearman_ignores_monotone_transforms(
            pairs in prop::collection::vec((-50i32..50, -50i32..50), 3..30)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman(&x, &y) {
                let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + 3.0).collect();
                let ty: Vec<f64> = y.iter().map(|v| v * v * v).collect();
                let rt = spearman(&tx, &ty).unwrap();
                prop_assert!((r - rt).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn box_summary_is_ordered(values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let b = box_summary(&values).unwrap();
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            prop_assert!(b.lower_fence <= b.q1 && b.q3 <= b.upper_fence);
        }
    }
}
