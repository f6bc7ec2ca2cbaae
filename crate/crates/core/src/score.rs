//! Comparing pipeline outputs with simulator ground truth.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attendance::AttendanceMatrix;
use crate::geo::haversine;
use crate::model::ParticipantId;
use crate::pipeline::{AccuracyReport, AttendeeTable, LocationTable};
use crate::sim::{GroundTruthLog, SimError};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryMetrics {
    /// Errors of accepted bin locations against the true classroom.
    pub location: Option<AccuracyReport>,
    /// Share of predicted `(bin, student)` attendances that were real.
    pub precision: f64,
    /// Share of all truly present `(bin, student)` pairs that were predicted,
    /// including bins the pipeline could not place.
    pub recall: f64,
    pub predicted: usize,
    pub truly_present: usize,
    /// Spearman of true against estimated per-student term attendance.
    pub term_spearman: Option<f64>,
    pub students_compared: usize,
}

/// Pipeline view needed for scoring.
#[derive(Debug, Clone, Copy)]
pub struct PipelineView<'a> {
    pub source_run_id: &'a str,
    pub locations: &'a LocationTable,
    pub attendees: &'a AttendeeTable,
    pub matrix: &'a AttendanceMatrix,
}

pub fn score_against_truth(outputs: PipelineView<'_>, truth: &GroundTruthLog) -> Result<RecoveryMetrics, SimError> {
    if outputs.source_run_id != truth.run_id {
        return Err(SimError::RunMismatch {
            truth: truth.run_id.clone(),
            outputs: outputs.source_run_id.to_string(),
        });
    }
    let tables = &truth.tables;

    let distances: Vec<f64> = outputs
        .locations
        .iter()
        .filter_map(|((session, bin), (point, _))| {
            let real = tables.locations.get(session)?.get(*bin)?;
            Some(haversine(*point, *real).value())
        })
        .collect();

    let present = |session, p: &ParticipantId, bin: usize| -> bool {
        tables
            .presence
            .get(session)
            .and_then(|people| people.get(p))
            .and_then(|bins| bins.get(bin).copied())
            .unwrap_or(false)
    };
    let mut predicted = 0usize;
    let mut hits = 0usize;
    for ((session, bin), people) in outputs.attendees {
        for p in people {
            predicted += 1;
            hits += usize::from(present(session, p, *bin));
        }
    }
    let truly_present: usize = tables
        .presence
        .values()
        .flat_map(|people| people.values())
        .map(|bins| bins.iter().filter(|&&b| b).count())
        .sum();

    let mut true_sessions: BTreeMap<&ParticipantId, Vec<f64>> = BTreeMap::new();
    for people in tables.presence.values() {
        for (p, bins) in people {
            let share = bins.iter().filter(|&&b| b).count() as f64 / bins.len().max(1) as f64;
            true_sessions.entry(p).or_default().push(share);
        }
    }
    let (mut real, mut estimated) = (Vec::new(), Vec::new());
    for (p, est) in outputs.matrix.term_means() {
        if let Some(shares) = true_sessions.get(&p) {
            real.push(stats::mean(shares).expect("non-empty"));
            estimated.push(est);
        }
    }

    Ok(RecoveryMetrics {
        location: AccuracyReport::from_distances(distances),
        precision: if predicted == 0 { 0.0 } else { hits as f64 / predicted as f64 },
        recall: if truly_present == 0 { 1.0 } else { hits as f64 / truly_present as f64 },
        predicted,
        truly_present,
        term_spearman: stats::spearman(&real, &estimated).ok(),
        students_compared: real.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attendance::{SessionCount, SessionKey};
    use crate::io::TruthTables;
    use crate::model::GeoPoint;
    use std::collections::BTreeSet;

    fn truth() -> GroundTruthLog {
        let key = SessionKey::new("c".into(), 0);
        let room = GeoPoint::new(55.785, 12.52).unwrap();
        let mut tables = TruthTables::default();
        tables.locations.insert(key.clone(), vec![room; 2]);
        let people = [("a", [true, true]), ("b", [true, false]), ("d", [false, false]), ("e", [true, true])];
        tables.presence.insert(
            key,
            people.iter().map(|(p, bins)| (ParticipantId::from(*p), bins.to_vec())).collect(),
        );
        GroundTruthLog {
            run_id: "r1".into(),
            tables,
        }
    }

    fn perfect(truth: &GroundTruthLog) -> (LocationTable, AttendeeTable, AttendanceMatrix) {
        let mut locations = LocationTable::new();
        let mut attendees = AttendeeTable::new();
        let mut matrix = AttendanceMatrix::new(2);
        for (key, rooms) in &truth.tables.locations {
            for (bin, room) in rooms.iter().enumerate() {
                locations.insert((key.clone(), bin), (*room, 2));
                let set: BTreeSet<ParticipantId> = truth.tables.presence[key]
                    .iter()
                    .filter(|(_, b)| b[bin])
                    .map(|(p, _)| p.clone())
                    .collect();
                attendees.insert((key.clone(), bin), set);
            }
            for (p, bins) in &truth.tables.presence[key] {
                let count = SessionCount {
                    week: 1,
                    attended_bins: bins.iter().filter(|&&b| b).count() as u32,
                    estimated_bins: 2,
                };
                matrix.insert(p.clone(), key.clone(), count).unwrap();
            }
        }
        (locations, attendees, matrix)
    }

    #[test]
    fn perfect_outputs_score_one() {
        let t = truth();
        let (l, a, m) = perfect(&t);
        let view = PipelineView {
            source_run_id: "r1",
            locations: &l,
            attendees: &a,
            matrix: &m,
        };
        let s = score_against_truth(view, &t).unwrap();
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.term_spearman, Some(1.0));
        let loc = s.location.unwrap();
        assert_eq!(loc.max_error(), 0.0);
        assert_eq!(loc.within_50, 1.0);
    }

    #[test]
    fn mismatched_run_is_an_error() {
        let t = truth();
        let (l, a, m) = perfect(&t);
        let view = PipelineView {
            source_run_id: "other",
            locations: &l,
            attendees: &a,
            matrix: &m,
        };
        assert!(matches!(score_against_truth(view, &t), Err(SimError::RunMismatch { .. })));
    }

    #[test]
    fn everyone_everywhere_has_base_rate_precision() {
        let t = truth();
        let (l, mut a, m) = perfect(&t);
        let all: BTreeSet<ParticipantId> = ["a", "b", "d", "e"].iter().map(|&p| p.into()).collect();
        for v in a.values_mut() {
            *v = all.clone();
        }
        let view = PipelineView {
            source_run_id: "r1",
            locations: &l,
            attendees: &a,
            matrix: &m,
        };
        let s = score_against_truth(view, &t).unwrap();
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.precision, 5.0 / 8.0);
    }
}
