use std::fmt;

use serde::Serialize;

use super::StatsError;
use crate::model::{Grade, GradeRecord};

/// Coarse performance band of a course grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PerformanceGroup {
    Low,
    Moderate,
    High,
}

impl PerformanceGroup {
    pub const ALL: [PerformanceGroup; 3] = [PerformanceGroup::Low, PerformanceGroup::Moderate, PerformanceGroup::High];

    pub fn of(grade: Grade) -> Self {
        match grade {
            Grade::MinusThree | Grade::Zero | Grade::Two => PerformanceGroup::Low,
            Grade::Four | Grade::Seven => PerformanceGroup::Moderate,
            Grade::Ten | Grade::Twelve => PerformanceGroup::High,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PerformanceGroup::Low => "low",
            PerformanceGroup::Moderate => "moderate",
            PerformanceGroup::High => "high",
        }
    }
}

impl fmt::Display for PerformanceGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Near-equal groups ordered by ascending value.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGrouping<K> {
    pub groups: Vec<Vec<K>>,
    /// `(min, max)` value covered by each group.
    pub boundaries: Vec<(f64, f64)>,
}

/// Sorts by value (ties by key) and cuts into `k` contiguous groups whose
/// sizes differ by at most one; leftovers go to the lowest groups.
pub fn rank_grouping<K: Ord + Clone>(values: &[(K, f64)], k: usize) -> Result<RankGrouping<K>, StatsError> {
    if k == 0 || values.len() < k {
        return Err(StatsError::TooFew {
            needed: k.max(1),
            got: values.len(),
        });
    }
    let mut sorted: Vec<&(K, f64)> = values.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let base = sorted.len() / k;
    let extra = sorted.len() % k;
    let mut groups = Vec::with_capacity(k);
    let mut boundaries = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        let slice = &sorted[start..start + size];
        boundaries.push((slice[0].1, slice[size - 1].1));
        groups.push(slice.iter().map(|(key, _)| key.clone()).collect());
        start += size;
    }
    Ok(RankGrouping { groups, boundaries })
}

pub fn quintile_grouping<K: Ord + Clone>(values: &[(K, f64)]) -> Result<RankGrouping<K>, StatsError> {
    rank_grouping(values, 5)
}

/// Counts over the seven grade points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GradeHistogram {
    pub counts: [usize; 7],
}

impl GradeHistogram {
    pub fn from_grades(grades: impl IntoIterator<Item = Grade>) -> Self {
        let mut h = Self::default();
        for g in grades {
            h.counts[Grade::ALL.iter().position(|&x| x == g).unwrap()] += 1;
        }
        h
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Normalized frequencies; all zero for an empty histogram.
    pub fn frequencies(&self) -> [f64; 7] {
        let total = self.total();
        let mut f = [0.0; 7];
        if total > 0 {
            for (out, &c) in f.iter_mut().zip(&self.counts) {
                *out = c as f64 / total as f64;
            }
        }
        f
    }

    /// Mass at -3 and 00.
    pub fn fail_rate(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (self.counts[0] + self.counts[1]) as f64 / total as f64)
    }

    pub fn mean(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| {
            Grade::ALL
                .iter()
                .zip(&self.counts)
                .map(|(g, &c)| c as f64 * g.value() as f64)
                .sum::<f64>()
                / total as f64
        })
    }
}

/// Grade histogram over records selected by `in_group`; no-shows never count.
pub fn grade_distribution<F>(grades: &[GradeRecord], mut in_group: F) -> GradeHistogram
where
    F: FnMut(&GradeRecord) -> bool,
{
    GradeHistogram::from_grades(grades.iter().filter(|r| in_group(r)).filter_map(|r| r.grade))
}
