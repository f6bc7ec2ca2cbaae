//! The attendance–performance and peer-similarity analyses over a finished
//! attendance matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::attendance::AttendanceMatrix;
use crate::io::{write_text, IoError};
use crate::model::{CourseId, Grade, GradeRecord, MessageEvent, ParticipantId};
use crate::peer::{
    build_social_network, corrected_attendance, corrected_scatter, own_vs_peer_scatter, peer_trend, PeerStatistic,
    Scatter, ScatterScope,
};
use crate::stats::{
    self, box_summary, histogram, mann_whitney_u, pairwise_slopes, per_course_correlations, rank_grouping, theil_sen,
    weekly_trend, BoxSummary, CourseCorrelation, GradeHistogram, HistogramBin, MwMode, PerformanceGroup, WeeklyPoint,
};

pub const SUMMARY: &str = "analysis_summary.json";
pub const GRADE_BOX: &str = "grade_box.csv";
pub const QUINTILES: &str = "quintiles.csv";
pub const TRENDS: &str = "trends.csv";
pub const SLOPE_HIST: &str = "slope_hist.csv";
pub const COURSE_CORR: &str = "course_corr.csv";
pub const PEER_SCATTER: &str = "peer_scatter.csv";
pub const CORRECTED_SCATTER: &str = "corrected_scatter.csv";
pub const PEER_TRENDS: &str = "peer_trends.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub quintiles: usize,
    pub mw_exact_max: usize,
    pub peer_restrict_course: bool,
    pub peer_stat: PeerStatistic,
    pub corr_hist_bin_width: f64,
    /// In percentage points per week.
    pub slope_hist_bin_width: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            quintiles: 5,
            mw_exact_max: 16,
            peer_restrict_course: false,
            peer_stat: PeerStatistic::Mean,
            corr_hist_bin_width: 0.1,
            slope_hist_bin_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: usize,
    pub n: usize,
    pub attendance_lo: f64,
    pub attendance_hi: f64,
    pub mean_grade: Option<f64>,
    pub fail_rate: Option<f64>,
    pub frequencies: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTrend {
    pub group: PerformanceGroup,
    pub points: Vec<WeeklyPoint>,
    /// Theil–Sen slope of the weekly means, percentage points per week.
    pub slope: Option<f64>,
    #[serde(skip)]
    pub pairwise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub a: PerformanceGroup,
    pub b: PerformanceGroup,
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterSummary {
    pub n: usize,
    pub correlation: Option<f64>,
}

impl ScatterSummary {
    fn of(s: &Option<Scatter>) -> Option<Self> {
        s.as_ref().map(|s| Self {
            n: s.points.len(),
            correlation: s.correlation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub config: AnalysisConfig,
    pub observations: usize,
    pub students: usize,
    /// Spearman over `(student, course)` observations: course attendance vs grade.
    pub attendance_grade_spearman: Option<f64>,
    /// Spearman over students: term attendance vs mean grade.
    pub term_attendance_grade_spearman: Option<f64>,
    pub grade_box: Vec<(i32, BoxSummary)>,
    pub quintiles: Vec<GroupRow>,
    /// Two-sided Mann–Whitney p-values on grades between attendance groups.
    pub quintile_p_values: Vec<Vec<Option<f64>>>,
    pub group_shares: BTreeMap<PerformanceGroup, f64>,
    pub trends: Vec<GroupTrend>,
    pub group_comparisons: Vec<GroupComparison>,
    pub course_correlations: Vec<CourseCorrelation>,
    pub course_correlation_histogram: Vec<HistogramBin>,
    pub peer_network_edges: usize,
    pub peer_mean_degree: f64,
    pub peer_term: Option<ScatterSummary>,
    pub peer_course: Option<ScatterSummary>,
    pub peer_corrected: Option<ScatterSummary>,
    pub peer_trends: BTreeMap<PerformanceGroup, Vec<WeeklyPoint>>,
    pub notes: Vec<String>,
    #[serde(skip)]
    course_scatter: Option<Scatter>,
    #[serde(skip)]
    corrected: Option<Scatter>,
}

/// Graded enrolments; no-shows are excluded.
pub fn graded(records: &[GradeRecord]) -> BTreeMap<(ParticipantId, CourseId), Grade> {
    records
        .iter()
        .filter_map(|r| Some(((r.participant.clone(), r.course.clone()), r.grade?)))
        .collect()
}

pub fn analyze(
    matrix: &AttendanceMatrix,
    grades: &[GradeRecord],
    messages: &[MessageEvent],
    config: &AnalysisConfig,
) -> Analysis {
    let mut notes = Vec::new();
    let graded = graded(grades);
    if graded.is_empty() {
        notes.push("no graded records (all no-shows or empty); grade analyses skipped".to_string());
    }

    let observations: Vec<((ParticipantId, CourseId), f64, Grade)> = matrix
        .course_means()
        .into_iter()
        .filter_map(|(key, att)| {
            let g = *graded.get(&key)?;
            Some((key, att, g))
        })
        .collect();
    let att: Vec<f64> = observations.iter().map(|o| o.1).collect();
    let gv: Vec<f64> = observations.iter().map(|o| f64::from(o.2.value())).collect();
    let attendance_grade_spearman = note_err(&mut notes, "attendance_grade_spearman", stats::spearman(&att, &gv));

    let mut per_student: BTreeMap<&ParticipantId, Vec<f64>> = BTreeMap::new();
    for ((p, _), _, g) in &observations {
        per_student.entry(p).or_default().push(f64::from(g.value()));
    }
    let term = matrix.term_means();
    let (mut ta, mut tg) = (Vec::new(), Vec::new());
    for (p, grades) in &per_student {
        if let Some(&a) = term.get(*p) {
            ta.push(a);
            tg.push(stats::mean(grades).expect("non-empty"));
        }
    }
    let term_attendance_grade_spearman =
        note_err(&mut notes, "term_attendance_grade_spearman", stats::spearman(&ta, &tg));

    let mut by_grade: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (_, a, g) in &observations {
        by_grade.entry(g.value()).or_default().push(*a);
    }
    let grade_box = by_grade
        .iter()
        .map(|(g, v)| (*g, box_summary(v).expect("non-empty")))
        .collect();

    let (quintiles, quintile_p_values) = attendance_groups(&observations, config, &mut notes);

    let mut group_counts: BTreeMap<PerformanceGroup, usize> = BTreeMap::new();
    for (_, _, g) in &observations {
        *group_counts.entry(PerformanceGroup::of(*g)).or_default() += 1;
    }
    let group_shares = group_counts
        .iter()
        .map(|(g, &c)| (*g, c as f64 / observations.len() as f64))
        .collect();

    let trends: Vec<GroupTrend> = weekly_trend(matrix, &graded)
        .into_iter()
        .map(|(group, points)| {
            let series: Vec<(f64, f64)> = points.iter().map(|p| (f64::from(p.week), 100.0 * p.mean)).collect();
            let slope = theil_sen(&series).ok();
            let pairwise = pairwise_slopes(&series).unwrap_or_default();
            if slope.is_none() {
                notes.push(format!("trend slope for {group} undefined: fewer than two weeks"));
            }
            GroupTrend {
                group,
                points,
                slope,
                pairwise,
            }
        })
        .collect();

    let mode = MwMode::Auto {
        exact_max: config.mw_exact_max,
    };
    let mut group_comparisons = Vec::new();
    let samples: BTreeMap<PerformanceGroup, Vec<f64>> = observations.iter().fold(BTreeMap::new(), |mut m, o| {
        m.entry(PerformanceGroup::of(o.2)).or_insert_with(Vec::new).push(o.1);
        m
    });
    for (i, a) in PerformanceGroup::ALL.iter().enumerate() {
        for b in &PerformanceGroup::ALL[i + 1..] {
            if let (Some(x), Some(y)) = (samples.get(a), samples.get(b)) {
                if let Ok(r) = mann_whitney_u(x, y, mode) {
                    group_comparisons.push(GroupComparison {
                        a: *a,
                        b: *b,
                        u: r.u,
                        p_value: r.p_value,
                        exact: r.exact,
                    });
                }
            }
        }
    }

    let (course_correlations, course_notes) = per_course_correlations(matrix, &graded);
    notes.extend(course_notes);
    let rhos: Vec<f64> = course_correlations.iter().map(|c| c.spearman).collect();
    let course_correlation_histogram = histogram(&rhos, -1.0, 1.0, config.corr_hist_bin_width);

    let net = build_social_network(messages);
    let stat = config.peer_stat;
    let scatter = |scope, label: &str, notes: &mut Vec<String>| match own_vs_peer_scatter(matrix, &net, scope, stat) {
        Ok(s) => {
            if s.correlation.is_none() {
                notes.push(format!("{label} correlation degenerate: constant attendance"));
            }
            Some(s)
        }
        Err(e) => {
            notes.push(format!("{label} skipped: {e}"));
            None
        }
    };
    let term_scatter = scatter(ScatterScope::Term, "peer_term", &mut notes);
    let course_scatter = scatter(ScatterScope::Course, "peer_course", &mut notes);
    let corrected = match corrected_scatter(&corrected_attendance(matrix), &net, stat) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("peer_corrected skipped: {e}"));
            None
        }
    };
    let peer_trends = peer_trend(matrix, &net, &graded, config.peer_restrict_course, stat);

    Analysis {
        config: config.clone(),
        observations: observations.len(),
        students: ta.len(),
        attendance_grade_spearman,
        term_attendance_grade_spearman,
        grade_box,
        quintiles,
        quintile_p_values,
        group_shares,
        trends,
        group_comparisons,
        course_correlations,
        course_correlation_histogram,
        peer_network_edges: net.edge_count(),
        peer_mean_degree: net.mean_degree(),
        peer_term: ScatterSummary::of(&term_scatter),
        peer_course: ScatterSummary::of(&course_scatter),
        peer_corrected: ScatterSummary::of(&corrected),
        peer_trends,
        notes,
        course_scatter,
        corrected,
    }
}

fn note_err<T, E: std::fmt::Display>(notes: &mut Vec<String>, what: &str, r: Result<T, E>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{what} skipped: {e}"))).ok()
}

type Observation = ((ParticipantId, CourseId), f64, Grade);

fn attendance_groups(
    observations: &[Observation],
    config: &AnalysisConfig,
    notes: &mut Vec<String>,
) -> (Vec<GroupRow>, Vec<Vec<Option<f64>>>) {
    let keyed: Vec<((ParticipantId, CourseId), f64)> = observations.iter().map(|o| (o.0.clone(), o.1)).collect();
    let grouping = match rank_grouping(&keyed, config.quintiles) {
        Ok(g) => g,
        Err(e) => {
            notes.push(format!("quintiles skipped: {e}"));
            return (Vec::new(), Vec::new());
        }
    };
    let grade_of: BTreeMap<&(ParticipantId, CourseId), Grade> = observations.iter().map(|o| (&o.0, o.2)).collect();
    let group_grades: Vec<Vec<Grade>> = grouping
        .groups
        .iter()
        .map(|g| g.iter().map(|k| grade_of[k]).collect())
        .collect();
    let rows = group_grades
        .iter()
        .zip(&grouping.boundaries)
        .enumerate()
        .map(|(i, (grades, &(lo, hi)))| {
            let h = GradeHistogram::from_grades(grades.iter().copied());
            GroupRow {
                group: i + 1,
                n: grades.len(),
                attendance_lo: lo,
                attendance_hi: hi,
                mean_grade: h.mean(),
                fail_rate: h.fail_rate(),
                frequencies: h.frequencies(),
            }
        })
        .collect();
    let values: Vec<Vec<f64>> = group_grades
        .iter()
        .map(|g| g.iter().map(|x| f64::from(x.value())).collect())
        .collect();
    let mode = MwMode::Auto {
        exact_max: config.mw_exact_max,
    };
    let p = values
        .iter()
        .map(|a| values.iter().map(|b| mann_whitney_u(a, b, mode).ok().map(|r| r.p_value)).collect())
        .collect();
    (rows, p)
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn scatter_rows(s: &Option<Scatter>, lo: f64, hi: f64) -> Vec<Vec<String>> {
    s.iter()
        .flat_map(|s| {
            s.points.iter().map(move |&(x, y)| {
                vec![x.to_string(), y.to_string(), s.density_at(x, y, lo, hi).to_string()]
            })
        })
        .collect()
}

/// Relative names of everything [`write_analysis`] produces.
pub const OUTPUTS: [&str; 9] = [
    SUMMARY,
    GRADE_BOX,
    QUINTILES,
    TRENDS,
    SLOPE_HIST,
    COURSE_CORR,
    PEER_SCATTER,
    CORRECTED_SCATTER,
    PEER_TRENDS,
];

pub fn write_analysis(dir: &Path, a: &Analysis) -> Result<(), IoError> {
    let mut summary = serde_json::to_string_pretty(a).expect("analysis serializes");
    summary.push('\n');
    write_text(dir, SUMMARY, &summary)?;

    let rows = a.grade_box.iter().map(|(g, b)| {
        [g.to_string(), b.n.to_string()]
            .into_iter()
            .chain([b.mean, b.median, b.q1, b.q3, b.lower_fence, b.upper_fence].map(|x| x.to_string()))
            .collect()
    });
    write_text(
        dir,
        GRADE_BOX,
        &table(&["grade", "n", "mean", "median", "q1", "q3", "lower_fence", "upper_fence"], rows)?,
    )?;

    let header = [
        "quintile", "n", "attendance_lo", "attendance_hi", "mean_grade", "fail_rate", "f_-3", "f_0", "f_2", "f_4",
        "f_7", "f_10", "f_12",
    ];
    let rows = a.quintiles.iter().map(|q| {
        [q.group.to_string(), q.n.to_string(), q.attendance_lo.to_string(), q.attendance_hi.to_string()]
            .into_iter()
            .chain([opt(q.mean_grade), opt(q.fail_rate)])
            .chain(q.frequencies.iter().map(f64::to_string))
            .collect()
    });
    write_text(dir, QUINTILES, &table(&header, rows)?)?;

    let rows = a.trends.iter().flat_map(|t| {
        t.points
            .iter()
            .map(move |p| vec![t.group.to_string(), p.week.to_string(), p.mean.to_string(), p.n.to_string()])
    });
    write_text(dir, TRENDS, &table(&["group", "week", "mean", "n"], rows)?)?;

    let mut rows = Vec::new();
    for t in &a.trends {
        if t.pairwise.is_empty() {
            continue;
        }
        let w = a.config.slope_hist_bin_width;
        let lo = (t.pairwise.iter().copied().fold(f64::INFINITY, f64::min) / w).floor() * w;
        let hi = (t.pairwise.iter().copied().fold(f64::NEG_INFINITY, f64::max) / w).floor() * w + w;
        for b in histogram(&t.pairwise, lo, hi, w) {
            rows.push(vec![
                t.group.to_string(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.density.to_string(),
            ]);
        }
    }
    write_text(dir, SLOPE_HIST, &table(&["group", "lo", "hi", "count", "density"], rows)?)?;

    let rows = a
        .course_correlations
        .iter()
        .map(|c| vec![c.course.to_string(), c.spearman.to_string(), c.n.to_string(), c.low_n.to_string()]);
    write_text(dir, COURSE_CORR, &table(&["course", "spearman", "n", "low_n"], rows)?)?;

    write_text(
        dir,
        PEER_SCATTER,
        &table(&["own", "peer_mean", "density_bin"], scatter_rows(&a.course_scatter, 0.0, 1.0))?,
    )?;
    write_text(
        dir,
        CORRECTED_SCATTER,
        &table(&["own_deviation", "peer_deviation", "density_bin"], scatter_rows(&a.corrected, -1.0, 1.0))?,
    )?;

    let rows = a.peer_trends.iter().flat_map(|(g, points)| {
        points
            .iter()
            .map(move |p| vec![g.to_string(), p.week.to_string(), p.mean.to_string(), p.n.to_string()])
    });
    write_text(dir, PEER_TRENDS, &table(&["group", "week", "peer_mean", "n"], rows)?)?;
    Ok(())
}
