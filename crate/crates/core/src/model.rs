//! Domain records shared by every stage of the pipeline.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// UTC timestamp in whole seconds.
pub type Timestamp = i64;

pub const DEFAULT_BIN_WIDTH_S: i64 = 15 * 60;
pub const DEFAULT_BLOCK_DURATION_S: i64 = 4 * 60 * 60;
pub const DEFAULT_SEMESTER_WEEKS: u32 = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("accuracy must be positive, got {0}")]
    Accuracy(f64),
    #[error("participant {0} cannot scan itself")]
    SelfScan(ParticipantId),
    #[error("participant {0} cannot message itself")]
    SelfMessage(ParticipantId),
    #[error("duration must be positive, got {0}")]
    Duration(i64),
    #[error("week {week} outside 1..={weeks}")]
    Week { week: u32, weeks: u32 },
    #[error("grade {0:?} is not on the 7-point scale")]
    Grade(String),
    #[error("campus ring needs at least 3 distinct vertices, got {0}")]
    RingTooShort(usize),
    #[error("campus ring edges {0} and {1} intersect")]
    RingSelfIntersects(usize, usize),
    #[error("bin width {width} s does not evenly divide block of {duration} s")]
    BinWidth { width: i64, duration: i64 },
    #[error("course {course}: blocks starting at {first} and {second} overlap")]
    OverlappingBlocks {
        course: CourseId,
        first: Timestamp,
        second: Timestamp,
    },
    #[error("course {0} has no participants")]
    EmptyRoster(CourseId),
    #[error("timestamp {t} outside study window [{start}, {end})")]
    OutsideWindow {
        t: Timestamp,
        start: Timestamp,
        end: Timestamp,
    },
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(id: impl AsRef<str>) -> Self {
                Self(Arc::from(id.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }
    };
}

string_id!(
    /// Pseudonymous participant identifier. Ordering is lexicographic and is
    /// what every deterministic tie rule in the crate relies on.
    ParticipantId
);
string_id!(CourseId);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ModelError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ModelError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }
}

/// One GPS reading. `accuracy` is the reported radius in meters; smaller is
/// better.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFix {
    pub participant: ParticipantId,
    pub t: Timestamp,
    pub point: GeoPoint,
    pub accuracy: f64,
}

impl LocationFix {
    pub fn new(
        participant: ParticipantId,
        t: Timestamp,
        point: GeoPoint,
        accuracy: f64,
    ) -> Result<Self, ModelError> {
        if !(accuracy > 0.0 && accuracy.is_finite()) {
            return Err(ModelError::Accuracy(accuracy));
        }
        Ok(Self {
            participant,
            t,
            point,
            accuracy,
        })
    }
}

/// A directed Bluetooth sighting: `scanner` saw `seen` at `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProximityScan {
    pub scanner: ParticipantId,
    pub seen: ParticipantId,
    pub t: Timestamp,
}

impl ProximityScan {
    pub fn new(scanner: ParticipantId, seen: ParticipantId, t: Timestamp) -> Result<Self, ModelError> {
        if scanner == seen {
            return Err(ModelError::SelfScan(scanner));
        }
        Ok(Self { scanner, seen, t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleBlock {
    pub course: CourseId,
    pub start: Timestamp,
    pub duration: i64,
    pub week: u32,
    pub official_location: Option<GeoPoint>,
}

impl ScheduleBlock {
    pub fn new(
        course: CourseId,
        start: Timestamp,
        duration: i64,
        week: u32,
        weeks: u32,
        official_location: Option<GeoPoint>,
    ) -> Result<Self, ModelError> {
        if duration <= 0 {
            return Err(ModelError::Duration(duration));
        }
        if week == 0 || week > weeks {
            return Err(ModelError::Week { week, weeks });
        }
        Ok(Self {
            course,
            start,
            duration,
            week,
            official_location,
        })
    }

    pub fn end(&self) -> Timestamp {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CourseRoster {
    pub course: CourseId,
    pub participants: BTreeSet<ParticipantId>,
    /// Sorted by start time.
    pub blocks: Vec<ScheduleBlock>,
}

impl CourseRoster {
    pub fn new(
        course: CourseId,
        participants: BTreeSet<ParticipantId>,
        mut blocks: Vec<ScheduleBlock>,
    ) -> Result<Self, ModelError> {
        if participants.is_empty() {
            return Err(ModelError::EmptyRoster(course));
        }
        blocks.sort_by_key(|b| b.start);
        for pair in blocks.windows(2) {
            if pair[1].start < pair[0].end() {
                return Err(ModelError::OverlappingBlocks {
                    course,
                    first: pair[0].start,
                    second: pair[1].start,
                });
            }
        }
        Ok(Self {
            course,
            participants,
            blocks,
        })
    }
}

/// The Danish 7-point grading scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    MinusThree,
    Zero,
    Two,
    Four,
    Seven,
    Ten,
    Twelve,
}

impl Grade {
    pub const ALL: [Grade; 7] = [
        Grade::MinusThree,
        Grade::Zero,
        Grade::Two,
        Grade::Four,
        Grade::Seven,
        Grade::Ten,
        Grade::Twelve,
    ];

    pub fn value(self) -> i32 {
        match self {
            Grade::MinusThree => -3,
            Grade::Zero => 0,
            Grade::Two => 2,
            Grade::Four => 4,
            Grade::Seven => 7,
            Grade::Ten => 10,
            Grade::Twelve => 12,
        }
    }

    pub fn from_value(v: i32) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.value() == v)
    }

    /// Accepts both integer and the zero-padded "00"/"02" notation.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        s.trim()
            .parse::<i32>()
            .ok()
            .and_then(Self::from_value)
            .ok_or_else(|| ModelError::Grade(s.to_string()))
    }

    pub fn is_fail(self) -> bool {
        matches!(self, Grade::MinusThree | Grade::Zero)
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeRecord {
    pub participant: ParticipantId,
    pub course: CourseId,
    /// `None` exactly when the participant did not show up for the exam.
    pub grade: Option<Grade>,
}

impl GradeRecord {
    pub fn no_show(&self) -> bool {
        self.grade.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEvent {
    pub sender: ParticipantId,
    pub receiver: ParticipantId,
    pub t: Timestamp,
}

impl MessageEvent {
    pub fn new(sender: ParticipantId, receiver: ParticipantId, t: Timestamp) -> Result<Self, ModelError> {
        if sender == receiver {
            return Err(ModelError::SelfMessage(sender));
        }
        Ok(Self { sender, receiver, t })
    }
}

/// Closed polygon in the lat/lon plane. The closing vertex is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct CampusBoundary {
    ring: Vec<GeoPoint>,
}

impl CampusBoundary {
    pub fn new(mut ring: Vec<GeoPoint>) -> Result<Self, ModelError> {
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(ModelError::RingTooShort(ring.len()));
        }
        let n = ring.len();
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                    return Err(ModelError::RingSelfIntersects(i, j));
                }
            }
        }
        Ok(Self { ring })
    }

    pub fn ring(&self) -> &[GeoPoint] {
        &self.ring
    }

    /// Axis-aligned rectangle; convenient for tests and the simulator.
    pub fn rectangle(south: f64, west: f64, north: f64, east: f64) -> Result<Self, ModelError> {
        Self::new(vec![
            GeoPoint::new(south, west)?,
            GeoPoint::new(south, east)?,
            GeoPoint::new(north, east)?,
            GeoPoint::new(north, west)?,
        ])
    }
}

fn orientation(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(p1: GeoPoint, p2: GeoPoint, q1: GeoPoint, q2: GeoPoint) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Half-open interval `[start, end)` inside a schedule block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeBin {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeBin {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

/// Everything read from one dataset directory. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub fixes: Vec<LocationFix>,
    pub scans: Vec<ProximityScan>,
    pub rosters: Vec<CourseRoster>,
    pub grades: Vec<GradeRecord>,
    pub messages: Vec<MessageEvent>,
    pub campus: Option<CampusBoundary>,
}

/// Keeps rosters whose every block lasts exactly `required_duration` and which
/// have at least `min_participants` members.
pub fn filter_courses(rosters: &[CourseRoster], min_participants: usize, required_duration: i64) -> Vec<CourseRoster> {
    rosters
        .iter()
        .filter(|r| r.participants.len() >= min_participants)
        .filter(|r| r.blocks.iter().all(|b| b.duration == required_duration))
        .cloned()
        .collect()
}

pub fn bin_schedule(block: &ScheduleBlock, bin_width: i64) -> Result<Vec<TimeBin>, ModelError> {
    if bin_width <= 0 || bin_width > block.duration || block.duration % bin_width != 0 {
        return Err(ModelError::BinWidth {
            width: bin_width,
            duration: block.duration,
        });
    }
    let count = (block.duration / bin_width) as usize;
    Ok((0..count)
        .map(|index| {
            let start = block.start + index as i64 * bin_width;
            TimeBin {
                index,
                start,
                end: start + bin_width,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(duration: i64) -> ScheduleBlock {
        ScheduleBlock::new("c1".into(), 1_000, duration, 1, 13, None).unwrap()
    }

    fn roster(course: &str, n: usize, duration: i64) -> CourseRoster {
        let participants = (0..n).map(|i| ParticipantId::new(format!("p{i:02}"))).collect();
        let blocks = vec![ScheduleBlock::new(course.into(), 0, duration, 1, 13, None).unwrap()];
        CourseRoster::new(course.into(), participants, blocks).unwrap()
    }

    #[test]
    fn four_hour_block_has_sixteen_quarter_hour_bins() {
        let bins = bin_schedule(&block(14_400), 900).unwrap();
        assert_eq!(bins.len(), 16);
        assert_eq!((bins[0].start, bins[0].end), (1_000, 1_900));
        assert_eq!(bin_schedule(&block(14_400), 1_800).unwrap().len(), 8);
    }

    #[test]
    fn non_divisor_bin_width_is_rejected() {
        assert!(bin_schedule(&block(3_600), 420).is_err());
        assert!(bin_schedule(&block(3_600), 7_200).is_err());
        assert!(bin_schedule(&block(3_600), 0).is_err());
    }

    #[test]
    fn course_filter_applies_size_and_duration() {
        let rosters = vec![
            roster("small", 7, 14_400),
            roster("ok", 8, 14_400),
            roster("short", 20, 7_200),
        ];
        let kept = filter_courses(&rosters, 8, 14_400);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].course.as_str(), "ok");
        assert!(filter_courses(&[], 8, 14_400).is_empty());
        assert_eq!(filter_courses(&kept, 8, 14_400), kept);
    }

    #[test]
    fn grades_accept_padded_notation() {
        assert_eq!(Grade::parse("00").unwrap(), Grade::Zero);
        assert_eq!(Grade::parse("02").unwrap(), Grade::Two);
        assert_eq!(Grade::parse("-3").unwrap(), Grade::MinusThree);
        assert!(Grade::parse("5").is_err());
        assert!(Grade::parse("A").is_err());
    }

    #[test]
    fn invalid_records_are_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -181.0).is_err());
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        assert!(LocationFix::new("a".into(), 0, p, -5.0).is_err());
        assert!(LocationFix::new("a".into(), 0, p, 0.0).is_err());
        assert!(ProximityScan::new("a".into(), "a".into(), 0).is_err());
        assert!(MessageEvent::new("a".into(), "a".into(), 0).is_err());
        assert!(ScheduleBlock::new("c".into(), 0, 0, 1, 13, None).is_err());
        assert!(ScheduleBlock::new("c".into(), 0, 10, 14, 13, None).is_err());
    }

    #[test]
    fn overlapping_blocks_are_rejected() {
        let b1 = ScheduleBlock::new("c".into(), 0, 100, 1, 13, None).unwrap();
        let b2 = ScheduleBlock::new("c".into(), 50, 100, 1, 13, None).unwrap();
        let people = ["a"].into_iter().map(ParticipantId::from).collect();
        assert!(matches!(
            CourseRoster::new("c".into(), people, vec![b1, b2]),
            Err(ModelError::OverlappingBlocks { .. })
        ));
    }

    #[test]
    fn campus_ring_validation() {
        let p = |lat, lon| GeoPoint::new(lat, lon).unwrap();
        assert!(CampusBoundary::new(vec![p(0.0, 0.0), p(1.0, 0.0)]).is_err());
        // bow-tie
        let bowtie = vec![p(0.0, 0.0), p(1.0, 1.0), p(1.0, 0.0), p(0.0, 1.0)];
        assert!(matches!(
            CampusBoundary::new(bowtie),
            Err(ModelError::RingSelfIntersects(..))
        ));
        let closed = vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(0.0, 0.0)];
        assert_eq!(CampusBoundary::new(closed).unwrap().ring().len(), 3);
    }

    proptest! {
        #[test]
        fn bins_partition_the_block(start in -1_000_000i64..1_000_000, width in 1i64..2_000, count in 1i64..40) {
            let b = ScheduleBlock::new("c".into(), start, width * count, 1, 13, None).unwrap();
            let bins = bin_schedule(&b, width).unwrap();
            prop_assert_eq!(bins.len() as i64, count);
            prop_assert_eq!(bins[0].start, b.start);
            prop_assert_eq!(bins.last().unwrap().end, b.end());
            for pair in bins.windows(2) {
                prop_assert_eq!(pair[0].end, pair[1].start);
                prop_assert!(pair[0].start < pair[0].end);
            }
        }
    }
}
