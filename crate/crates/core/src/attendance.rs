//! Per-session attendance counts and their aggregates.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{CourseId, ParticipantId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionKey {
    pub course: CourseId,
    pub block_start: Timestamp,
}

impl SessionKey {
    pub fn new(course: CourseId, block_start: Timestamp) -> Self {
        Self { course, block_start }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionCount {
    pub week: u32,
    pub attended_bins: u32,
    pub estimated_bins: u32,
}

impl SessionCount {
    pub fn fraction(&self) -> f64 {
        f64::from(self.attended_bins) / f64::from(self.estimated_bins)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("{participant} @ {course}/{block_start}: attended {attended} > estimated {estimated}")]
    AttendedExceedsEstimated {
        participant: ParticipantId,
        course: CourseId,
        block_start: Timestamp,
        attended: u32,
        estimated: u32,
    },
    #[error("{participant} @ {course}/{block_start}: estimated bins {estimated} outside 1..={max}")]
    EstimatedOutOfRange {
        participant: ParticipantId,
        course: CourseId,
        block_start: Timestamp,
        estimated: u32,
        max: u32,
    },
}

/// `(participant, session) -> counts`, only for sessions where the class
/// could be placed in at least one bin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttendanceMatrix {
    bins_per_block: u32,
    rows: BTreeMap<ParticipantId, BTreeMap<SessionKey, SessionCount>>,
}

impl AttendanceMatrix {
    pub fn new(bins_per_block: u32) -> Self {
        Self {
            bins_per_block,
            rows: BTreeMap::new(),
        }
    }

    pub fn bins_per_block(&self) -> u32 {
        self.bins_per_block
    }

    pub fn insert(
        &mut self,
        participant: ParticipantId,
        session: SessionKey,
        count: SessionCount,
    ) -> Result<(), MatrixError> {
        if count.estimated_bins == 0 || count.estimated_bins > self.bins_per_block {
            return Err(MatrixError::EstimatedOutOfRange {
                participant,
                course: session.course,
                block_start: session.block_start,
                estimated: count.estimated_bins,
                max: self.bins_per_block,
            });
        }
        if count.attended_bins > count.estimated_bins {
            return Err(MatrixError::AttendedExceedsEstimated {
                participant,
                course: session.course,
                block_start: session.block_start,
                attended: count.attended_bins,
                estimated: count.estimated_bins,
            });
        }
        self.rows.entry(participant).or_default().insert(session, count);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.rows.keys()
    }

    pub fn sessions_of(&self, participant: &ParticipantId) -> impl Iterator<Item = (&SessionKey, &SessionCount)> {
        self.rows.get(participant).into_iter().flatten()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ParticipantId, &SessionKey, &SessionCount)> {
        self.rows
            .iter()
            .flat_map(|(p, sessions)| sessions.iter().map(move |(k, c)| (p, k, c)))
    }

    pub fn get(&self, participant: &ParticipantId, session: &SessionKey) -> Option<&SessionCount> {
        self.rows.get(participant)?.get(session)
    }

    fn mean_where<F>(&self, participant: &ParticipantId, keep: F) -> Option<f64>
    where
        F: Fn(&SessionKey, &SessionCount) -> bool,
    {
        let (sum, n) = self
            .sessions_of(participant)
            .filter(|(k, c)| keep(k, c))
            .fold((0.0, 0usize), |(s, n), (_, c)| (s + c.fraction(), n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Mean of session fractions, each session weighted equally.
    pub fn term_mean(&self, participant: &ParticipantId) -> Option<f64> {
        self.mean_where(participant, |_, _| true)
    }

    pub fn course_mean(&self, participant: &ParticipantId, course: &CourseId) -> Option<f64> {
        self.mean_where(participant, |k, _| &k.course == course)
    }

    pub fn weekly_mean(&self, participant: &ParticipantId, week: u32) -> Option<f64> {
        self.mean_where(participant, |_, c| c.week == week)
    }

    pub fn course_week_mean(&self, participant: &ParticipantId, course: &CourseId, week: u32) -> Option<f64> {
        self.mean_where(participant, |k, c| &k.course == course && c.week == week)
    }

    pub fn is_enrolled(&self, participant: &ParticipantId, course: &CourseId) -> bool {
        self.sessions_of(participant).any(|(k, _)| &k.course == course)
    }

    pub fn term_means(&self) -> BTreeMap<ParticipantId, f64> {
        self.rows
            .keys()
            .filter_map(|p| self.term_mean(p).map(|m| (p.clone(), m)))
            .collect()
    }

    /// Term attendance per `(participant, course)` observation.
    pub fn course_means(&self) -> BTreeMap<(ParticipantId, CourseId), f64> {
        let mut out = BTreeMap::new();
        for (p, sessions) in &self.rows {
            let courses: BTreeSet<&CourseId> = sessions.keys().map(|k| &k.course).collect();
            for c in courses {
                if let Some(m) = self.course_mean(p, c) {
                    out.insert((p.clone(), c.clone()), m);
                }
            }
        }
        out
    }

    /// Fractions grouped by class session, participants in id order.
    pub fn by_session(&self) -> BTreeMap<SessionKey, Vec<(ParticipantId, f64)>> {
        let mut out: BTreeMap<SessionKey, Vec<(ParticipantId, f64)>> = BTreeMap::new();
        for (p, k, c) in self.entries() {
            out.entry(k.clone()).or_default().push((p.clone(), c.fraction()));
        }
        out
    }

    pub fn weeks(&self) -> BTreeSet<u32> {
        self.entries().map(|(_, _, c)| c.week).collect()
    }
}
