use std::collections::BTreeMap;

use serde::Serialize;

use super::{spearman, PerformanceGroup};
use crate::attendance::AttendanceMatrix;
use crate::model::{CourseId, Grade, ParticipantId};

/// Courses with fewer graded participants than this are flagged.
pub const LOW_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeeklyPoint {
    pub week: u32,
    pub mean: f64,
    pub n: usize,
}

/// Per performance group and week, the mean session fraction over the
/// `(participant, course)` observations in that group.
pub fn weekly_trend(
    matrix: &AttendanceMatrix,
    grades: &BTreeMap<(ParticipantId, CourseId), Grade>,
) -> BTreeMap<PerformanceGroup, Vec<WeeklyPoint>> {
    let mut acc: BTreeMap<PerformanceGroup, BTreeMap<u32, (f64, usize)>> = BTreeMap::new();
    for (p, key, count) in matrix.entries() {
        let Some(&grade) = grades.get(&(p.clone(), key.course.clone())) else {
            continue;
        };
        let cell = acc
            .entry(PerformanceGroup::of(grade))
            .or_default()
            .entry(count.week)
            .or_default();
        cell.0 += count.fraction();
        cell.1 += 1;
    }
    acc.into_iter()
        .map(|(group, weeks)| {
            let points = weeks
                .into_iter()
                .map(|(week, (sum, n))| WeeklyPoint {
                    week,
                    mean: sum / n as f64,
                    n,
                })
                .collect();
            (group, points)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CourseCorrelation {
    pub course: CourseId,
    pub spearman: f64,
    pub n: usize,
    pub low_n: bool,
}

/// Spearman of course attendance against grade, per course. Courses that
/// cannot produce a coefficient are reported in the returned notes.
pub fn per_course_correlations(
    matrix: &AttendanceMatrix,
    grades: &BTreeMap<(ParticipantId, CourseId), Grade>,
) -> (Vec<CourseCorrelation>, Vec<String>) {
    let mut per_course: BTreeMap<CourseId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((p, course), attendance) in matrix.course_means() {
        if let Some(g) = grades.get(&(p, course.clone())) {
            let entry = per_course.entry(course).or_default();
            entry.0.push(attendance);
            entry.1.push(f64::from(g.value()));
        }
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (course, (att, grade)) in per_course {
        match spearman(&att, &grade) {
            Ok(rho) => rows.push(CourseCorrelation {
                course,
                spearman: rho,
                n: att.len(),
                low_n: att.len() < LOW_N,
            }),
            Err(e) => notes.push(format!("course {course} skipped: {e}")),
        }
    }
    (rows, notes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Count divided by `total * width`, so the bars integrate to one.
    pub density: f64,
}

/// Fixed-width histogram over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, width: f64) -> Vec<HistogramBin> {
    let bins = (((hi - lo) / width).round() as usize).max(1);
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
        total += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count,
            density: if total == 0 { 0.0 } else { count as f64 / (total as f64 * width) },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attendance::{SessionCount, SessionKey};

    fn insert(m: &mut AttendanceMatrix, p: &str, course: &str, week: u32, attended: u32) {
        let start = i64::from(week) * 1_000;
        let count = SessionCount {
            week,
            attended_bins: attended,
            estimated_bins: 10,
        };
        m.insert(p.into(), SessionKey::new(course.into(), start), count).unwrap();
    }

    #[test]
    fn flat_trend_for_constant_attendance() {
        let mut m = AttendanceMatrix::new(16);
        for w in 1..=4 {
            insert(&mut m, "s", "c", w, 8);
        }
        let grades = BTreeMap::from([(("s".into(), "c".into()), Grade::Seven)]);
        let trend = weekly_trend(&m, &grades);
        let points = &trend[&PerformanceGroup::Moderate];
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|p| p.mean == 0.8 && p.n == 1));
        assert!(!trend.contains_key(&PerformanceGroup::Low));
    }

    #[test]
    fn course_correlation_direction_and_low_n_flag() {
        let mut m = AttendanceMatrix::new(16);
        let grades_for = [(2u32, Grade::Twelve), (5, Grade::Seven), (9, Grade::Zero)];
        let mut grades = BTreeMap::new();
        for (i, (att, g)) in grades_for.iter().enumerate() {
            let p = format!("s{i}");
            insert(&mut m, &p, "inv", 1, *att);
            insert(&mut m, &p, "pos", 1, 10 - *att);
            grades.insert((p.as_str().into(), "inv".into()), *g);
            grades.insert((p.as_str().into(), "pos".into()), *g);
        }
        insert(&mut m, "x", "tiny", 1, 3);
        grades.insert(("x".into(), "tiny".into()), Grade::Four);
        let (rows, notes) = per_course_correlations(&m, &grades);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].course.as_str(), "inv");
        assert_eq!(rows[0].spearman, -1.0);
        assert!(rows[0].low_n);
        assert_eq!(rows[1].spearman, 1.0);
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let h = histogram(&[-1.0, -0.95, 0.0, 0.5, 1.0], -1.0, 1.0, 0.5);
        assert_eq!(h.len(), 4);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 0, 1, 2]);
        let area: f64 = h.iter().map(|b| b.density * (b.hi - b.lo)).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }
}
