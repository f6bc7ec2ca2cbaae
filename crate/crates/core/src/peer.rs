//! Text-message contacts and how their attendance relates to a student's own.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::attendance::{AttendanceMatrix, SessionKey};
use crate::model::{CourseId, Grade, MessageEvent, ParticipantId};
use crate::stats::{self, PerformanceGroup, StatsError, WeeklyPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeerError {
    #[error("need at least 3 students with defined peer attendance, got {0}")]
    TooFewPairs(usize),
}

/// Undirected, unweighted: one message in either direction is a tie.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialNetwork {
    adjacency: BTreeMap<ParticipantId, BTreeSet<ParticipantId>>,
}

impl SocialNetwork {
    pub fn neighbors(&self, p: &ParticipantId) -> impl Iterator<Item = &ParticipantId> {
        self.adjacency.get(p).into_iter().flatten()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ParticipantId> {
        self.adjacency.keys()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.adjacency.is_empty() {
            0.0
        } else {
            2.0 * self.edge_count() as f64 / self.adjacency.len() as f64
        }
    }
}

pub fn build_social_network(messages: &[MessageEvent]) -> SocialNetwork {
    let mut adjacency: BTreeMap<ParticipantId, BTreeSet<ParticipantId>> = BTreeMap::new();
    for m in messages {
        if m.sender == m.receiver {
            continue;
        }
        adjacency.entry(m.sender.clone()).or_default().insert(m.receiver.clone());
        adjacency.entry(m.receiver.clone()).or_default().insert(m.sender.clone());
    }
    SocialNetwork { adjacency }
}

/// Which attendance aggregate of a contact is compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeerScope {
    Term,
    /// Only contacts enrolled in the course, using their course attendance.
    Course(CourseId),
    Week(u32),
    /// Contacts enrolled in the course, their attendance in that week.
    CourseWeek(CourseId, u32),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum PeerStatistic {
    #[default]
    Mean,
    Median,
}

fn aggregate(values: &[f64], stat: PeerStatistic) -> Option<f64> {
    match stat {
        PeerStatistic::Mean => stats::mean(values),
        PeerStatistic::Median => stats::median(values),
    }
}

fn peer_values(student: &ParticipantId, net: &SocialNetwork, matrix: &AttendanceMatrix, scope: &PeerScope) -> Vec<f64> {
    net.neighbors(student)
        .filter_map(|n| match scope {
            PeerScope::Term => matrix.term_mean(n),
            PeerScope::Course(c) => matrix.course_mean(n, c),
            PeerScope::Week(w) => matrix.weekly_mean(n, *w),
            PeerScope::CourseWeek(c, w) => matrix.course_week_mean(n, c, *w),
        })
        .collect()
}

/// Average attendance among the student's contacts; `None` if no contact
/// has a value in scope.
pub fn peer_mean_attendance(
    student: &ParticipantId,
    net: &SocialNetwork,
    matrix: &AttendanceMatrix,
    scope: &PeerScope,
    stat: PeerStatistic,
) -> Option<f64> {
    aggregate(&peer_values(student, net, matrix, scope), stat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScatterScope {
    /// One point per student.
    Term,
    /// One point per `(student, course)`, contacts restricted to the course.
    Course,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scatter {
    pub points: Vec<(f64, f64)>,
    /// Pearson correlation; `None` when either side is constant.
    pub correlation: Option<f64>,
    /// Share of all points in each cell of a `grid x grid` partition of the
    /// unit square, row-major by own value.
    pub density: Vec<Vec<f64>>,
}

pub const DENSITY_GRID: usize = 10;

impl Scatter {
    fn from_points(points: Vec<(f64, f64)>, lo: f64, hi: f64) -> Result<Self, PeerError> {
        if points.len() < 3 {
            return Err(PeerError::TooFewPairs(points.len()));
        }
        let own: Vec<f64> = points.iter().map(|p| p.0).collect();
        let peer: Vec<f64> = points.iter().map(|p| p.1).collect();
        let correlation = match stats::pearson(&own, &peer) {
            Ok(r) => Some(r),
            Err(StatsError::Constant) => None,
            Err(e) => unreachable!("validated sizes: {e}"),
        };
        let mut density = vec![vec![0.0; DENSITY_GRID]; DENSITY_GRID];
        let share = 1.0 / points.len() as f64;
        for &(x, y) in &points {
            let (i, j) = (cell(x, lo, hi), cell(y, lo, hi));
            density[i][j] += share;
        }
        Ok(Self {
            points,
            correlation,
            density,
        })
    }

    /// Density of the cell the point falls in.
    pub fn density_at(&self, x: f64, y: f64, lo: f64, hi: f64) -> f64 {
        self.density[cell(x, lo, hi)][cell(y, lo, hi)]
    }
}

fn cell(v: f64, lo: f64, hi: f64) -> usize {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((t * DENSITY_GRID as f64) as usize).min(DENSITY_GRID - 1)
}

/// Own attendance against contacts' attendance.
pub fn own_vs_peer_scatter(
    matrix: &AttendanceMatrix,
    net: &SocialNetwork,
    scope: ScatterScope,
    stat: PeerStatistic,
) -> Result<Scatter, PeerError> {
    let mut points = Vec::new();
    match scope {
        ScatterScope::Term => {
            for (p, own) in matrix.term_means() {
                if let Some(peer) = peer_mean_attendance(&p, net, matrix, &PeerScope::Term, stat) {
                    points.push((own, peer));
                }
            }
        }
        ScatterScope::Course => {
            for ((p, course), own) in matrix.course_means() {
                if let Some(peer) = peer_mean_attendance(&p, net, matrix, &PeerScope::Course(course), stat) {
                    points.push((own, peer));
                }
            }
        }
    }
    Scatter::from_points(points, 0.0, 1.0)
}

/// Attendance relative to the class mean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectedAttendance {
    pub per_session: BTreeMap<SessionKey, Vec<(ParticipantId, f64)>>,
    pub per_course: BTreeMap<(ParticipantId, CourseId), f64>,
}

/// Subtracts each session's mean fraction; sessions with fewer than two
/// measured students are skipped. Course values are medians over sessions.
pub fn corrected_attendance(matrix: &AttendanceMatrix) -> CorrectedAttendance {
    let mut out = CorrectedAttendance::default();
    let mut collected: BTreeMap<(ParticipantId, CourseId), Vec<f64>> = BTreeMap::new();
    for (key, fractions) in matrix.by_session() {
        if fractions.len() < 2 {
            continue;
        }
        let class_mean = fractions.iter().map(|(_, f)| f).sum::<f64>() / fractions.len() as f64;
        let deviations: Vec<(ParticipantId, f64)> = fractions.into_iter().map(|(p, f)| (p, f - class_mean)).collect();
        for (p, d) in &deviations {
            collected.entry((p.clone(), key.course.clone())).or_default().push(*d);
        }
        out.per_session.insert(key, deviations);
    }
    out.per_course = collected
        .into_iter()
        .map(|(k, v)| (k, stats::median(&v).expect("non-empty")))
        .collect();
    out
}

/// Own median deviation against the contacts' median deviation in the same
/// course.
pub fn corrected_scatter(
    corrected: &CorrectedAttendance,
    net: &SocialNetwork,
    stat: PeerStatistic,
) -> Result<Scatter, PeerError> {
    let mut points = Vec::new();
    for ((p, course), &own) in &corrected.per_course {
        let values: Vec<f64> = net
            .neighbors(p)
            .filter_map(|n| corrected.per_course.get(&(n.clone(), course.clone())).copied())
            .collect();
        if let Some(peer) = aggregate(&values, stat) {
            points.push((own, peer));
        }
    }
    Scatter::from_points(points, -1.0, 1.0)
}

/// Per performance group and week, the mean over observations of the
/// contacts' weekly attendance. With `restrict_to_course`, contacts count
/// only when enrolled in the observation's course.
pub fn peer_trend(
    matrix: &AttendanceMatrix,
    net: &SocialNetwork,
    grades: &BTreeMap<(ParticipantId, CourseId), Grade>,
    restrict_to_course: bool,
    stat: PeerStatistic,
) -> BTreeMap<PerformanceGroup, Vec<WeeklyPoint>> {
    let mut acc: BTreeMap<PerformanceGroup, BTreeMap<u32, (f64, usize)>> = BTreeMap::new();
    for (p, key, count) in matrix.entries() {
        let Some(&grade) = grades.get(&(p.clone(), key.course.clone())) else {
            continue;
        };
        let scope = if restrict_to_course {
            PeerScope::CourseWeek(key.course.clone(), count.week)
        } else {
            PeerScope::Week(count.week)
        };
        if let Some(v) = peer_mean_attendance(p, net, matrix, &scope, stat) {
            let cell = acc
                .entry(PerformanceGroup::of(grade))
                .or_default()
                .entry(count.week)
                .or_default();
            cell.0 += v;
            cell.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, weeks)| {
            let points = weeks
                .into_iter()
                .map(|(week, (sum, n))| WeeklyPoint {
                    week,
                    mean: sum / n as f64,
                    n,
                })
                .collect();
            (g, points)
        })
        .collect()
}
