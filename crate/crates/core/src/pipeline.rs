//! Class location and attendance reconstruction.
//!
//! For every bin of every eligible class block the pipeline builds the
//! proximity graph of the course roster, takes the ego-network of its
//! best-connected member, places the class at the median of the members'
//! most precise fixes, and then marks every roster member within the radius
//! (plus the cluster itself) as present.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::attendance::{AttendanceMatrix, MatrixError, SessionCount, SessionKey};
use crate::geo::{componentwise_median, contains, haversine};
use crate::model::{
    bin_schedule, filter_courses, CampusBoundary, CourseId, CourseRoster, Dataset, GeoPoint, LocationFix, ModelError,
    ParticipantId, ProximityScan, ScheduleBlock, TimeBin, Timestamp, DEFAULT_BIN_WIDTH_S, DEFAULT_BLOCK_DURATION_S,
};
use crate::proximity::{build_graph_from, primary_cluster, PrimaryCluster};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("dataset has no campus boundary")]
    NoCampus,
    #[error("zero eligible courses (need >= {min_participants} participants and {duration_s} s blocks)")]
    NoEligibleCourses { min_participants: usize, duration_s: i64 },
    #[error("no location estimate has an official location to compare against")]
    NoOfficialOverlap,
    #[error("radius must be positive, got {0}")]
    Radius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub bin_width_s: i64,
    pub block_duration_s: i64,
    pub min_participants: usize,
    pub radius_m: f64,
    pub min_cluster_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bin_width_s: DEFAULT_BIN_WIDTH_S,
            block_duration_s: DEFAULT_BLOCK_DURATION_S,
            min_participants: 8,
            radius_m: 200.0,
            min_cluster_size: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct IndexedFix {
    t: Timestamp,
    point: GeoPoint,
    accuracy: f64,
}

/// Fixes grouped per participant and sorted by time.
#[derive(Debug, Clone, Default)]
pub struct FixIndex {
    by_participant: HashMap<ParticipantId, Vec<IndexedFix>>,
}

impl FixIndex {
    pub fn new(fixes: &[LocationFix]) -> Self {
        let mut by_participant: HashMap<ParticipantId, Vec<IndexedFix>> = HashMap::new();
        for f in fixes {
            by_participant.entry(f.participant.clone()).or_default().push(IndexedFix {
                t: f.t,
                point: f.point,
                accuracy: f.accuracy,
            });
        }
        for list in by_participant.values_mut() {
            // stable, so equal (t, accuracy) keep input order
            list.sort_by(|a, b| a.t.cmp(&b.t).then(a.accuracy.total_cmp(&b.accuracy)));
        }
        Self { by_participant }
    }

    /// Most precise fix in the bin (smallest accuracy radius, earliest on
    /// ties).
    pub fn best_in(&self, participant: &ParticipantId, bin: &TimeBin) -> Option<(Timestamp, GeoPoint, f64)> {
        let list = self.by_participant.get(participant)?;
        let from = list.partition_point(|f| f.t < bin.start);
        let to = list.partition_point(|f| f.t < bin.end);
        list[from..to]
            .iter()
            .fold(None::<&IndexedFix>, |best, f| match best {
                Some(b) if b.accuracy <= f.accuracy => Some(b),
                _ => Some(f),
            })
            .map(|f| (f.t, f.point, f.accuracy))
    }
}

/// Median of the cluster members' best fixes, accepted only on campus.
pub fn estimate_bin_location(
    cluster: &PrimaryCluster,
    fixes: &FixIndex,
    bin: &TimeBin,
    campus: &CampusBoundary,
) -> Option<GeoPoint> {
    let points: Vec<GeoPoint> = cluster
        .members
        .iter()
        .filter_map(|m| fixes.best_in(m, bin).map(|(_, p, _)| p))
        .collect();
    let centre = componentwise_median(&points).ok()?;
    contains(campus, centre).then_some(centre)
}

/// Cluster members plus every roster member whose best fix in the bin lies
/// within `radius_m` of the estimate.
pub fn assign_attendance(
    estimate: GeoPoint,
    cluster: &PrimaryCluster,
    fixes: &FixIndex,
    roster: &BTreeSet<ParticipantId>,
    bin: &TimeBin,
    radius_m: f64,
) -> BTreeSet<ParticipantId> {
    let mut present = cluster.members.clone();
    for r in roster {
        if present.contains(r) {
            continue;
        }
        if let Some((_, p, _)) = fixes.best_in(r, bin) {
            if haversine(p, estimate).value() <= radius_m {
                present.insert(r.clone());
            }
        }
    }
    present
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinLocationEstimate {
    pub block: ScheduleBlock,
    pub bin: TimeBin,
    /// Present only when the location was accepted (on campus, cluster big
    /// enough).
    pub location: Option<GeoPoint>,
    pub cluster: Option<PrimaryCluster>,
}

impl BinLocationEstimate {
    pub fn course(&self) -> &CourseId {
        &self.block.course
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinAttendance {
    pub session: SessionKey,
    pub bin_index: usize,
    pub attendees: BTreeSet<ParticipantId>,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub estimates: Vec<BinLocationEstimate>,
    /// Only bins with an accepted location.
    pub attendance: Vec<BinAttendance>,
    pub matrix: AttendanceMatrix,
}

/// `(session, bin) -> (location, cluster size)`.
pub type LocationTable = BTreeMap<(SessionKey, usize), (GeoPoint, usize)>;
/// `(session, bin) -> attendees`.
pub type AttendeeTable = BTreeMap<(SessionKey, usize), BTreeSet<ParticipantId>>;

impl PipelineOutput {
    pub fn accepted(&self) -> impl Iterator<Item = &BinLocationEstimate> {
        self.estimates.iter().filter(|e| e.location.is_some())
    }

    pub fn location_table(&self) -> LocationTable {
        self.accepted()
            .map(|e| {
                let key = SessionKey::new(e.block.course.clone(), e.block.start);
                let size = e.cluster.as_ref().map_or(0, PrimaryCluster::len);
                ((key, e.bin.index), (e.location.expect("accepted"), size))
            })
            .collect()
    }

    pub fn attendee_table(&self) -> AttendeeTable {
        self.attendance
            .iter()
            .map(|b| ((b.session.clone(), b.bin_index), b.attendees.clone()))
            .collect()
    }
}

struct ScanIndex<'a> {
    sorted: Vec<&'a ProximityScan>,
}

impl<'a> ScanIndex<'a> {
    fn new(scans: &'a [ProximityScan]) -> Self {
        let mut sorted: Vec<&ProximityScan> = scans.iter().collect();
        sorted.sort_by_key(|s| s.t);
        Self { sorted }
    }

    fn window(&self, start: Timestamp, end: Timestamp) -> &[&'a ProximityScan] {
        let from = self.sorted.partition_point(|s| s.t < start);
        let to = self.sorted.partition_point(|s| s.t < end);
        &self.sorted[from..to]
    }
}

struct BlockResult {
    estimates: Vec<BinLocationEstimate>,
    attendance: Vec<BinAttendance>,
}

fn process_block(
    roster: &CourseRoster,
    block: &ScheduleBlock,
    scans: &ScanIndex<'_>,
    fixes: &FixIndex,
    campus: &CampusBoundary,
    config: &PipelineConfig,
) -> Result<BlockResult, PipelineError> {
    let bins = bin_schedule(block, config.bin_width_s)?;
    let session = SessionKey::new(block.course.clone(), block.start);
    let mut out = BlockResult {
        estimates: Vec::with_capacity(bins.len()),
        attendance: Vec::new(),
    };
    for bin in bins {
        let sightings = scans
            .window(bin.start, bin.end)
            .iter()
            .map(|s| (s.scanner.clone(), s.seen.clone(), s.t));
        let graph = build_graph_from(sightings, &roster.participants, &bin);
        let cluster = primary_cluster(&graph).filter(|c| c.len() >= config.min_cluster_size);
        let location = cluster
            .as_ref()
            .and_then(|c| estimate_bin_location(c, fixes, &bin, campus));
        if let (Some(c), Some(loc)) = (&cluster, location) {
            out.attendance.push(BinAttendance {
                session: session.clone(),
                bin_index: bin.index,
                attendees: assign_attendance(loc, c, fixes, &roster.participants, &bin, config.radius_m),
            });
        }
        out.estimates.push(BinLocationEstimate {
            block: block.clone(),
            bin,
            location,
            cluster,
        });
    }
    Ok(out)
}

/// Runs every block of `dataset.rosters` (assumed already filtered) and
/// folds the per-bin attendance into a matrix. Blocks are processed in
/// parallel and merged in roster/block order.
pub fn build_attendance_matrix(dataset: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    build_for(dataset, &dataset.rosters, config)
}

fn build_for(
    dataset: &Dataset,
    rosters: &[CourseRoster],
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    if config.radius_m.is_nan() || config.radius_m <= 0.0 {
        return Err(PipelineError::Radius(config.radius_m));
    }
    let campus = dataset.campus.as_ref().ok_or(PipelineError::NoCampus)?;
    let fixes = FixIndex::new(&dataset.fixes);
    let scans = ScanIndex::new(&dataset.scans);
    let bins_per_block = (config.block_duration_s / config.bin_width_s.max(1)) as u32;

    let work: Vec<(&CourseRoster, &ScheduleBlock)> = rosters
        .iter()
        .flat_map(|r| r.blocks.iter().map(move |b| (r, b)))
        .collect();
    let results: Vec<Result<BlockResult, PipelineError>> = work
        .par_iter()
        .map(|(roster, block)| process_block(roster, block, &scans, &fixes, campus, config))
        .collect();

    let mut output = PipelineOutput {
        matrix: AttendanceMatrix::new(bins_per_block.max(1)),
        ..Default::default()
    };
    for ((roster, block), result) in work.iter().zip(results) {
        let result = result?;
        let estimated = result.attendance.len() as u32;
        if estimated > 0 {
            for participant in &roster.participants {
                let attended = result
                    .attendance
                    .iter()
                    .filter(|b| b.attendees.contains(participant))
                    .count() as u32;
                output.matrix.insert(
                    participant.clone(),
                    SessionKey::new(block.course.clone(), block.start),
                    SessionCount {
                        week: block.week,
                        attended_bins: attended,
                        estimated_bins: estimated,
                    },
                )?;
            }
        }
        output.estimates.extend(result.estimates);
        output.attendance.extend(result.attendance);
    }
    Ok(output)
}

/// Course filter followed by [`build_attendance_matrix`].
pub fn run_pipeline(dataset: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let eligible = filter_courses(&dataset.rosters, config.min_participants, config.block_duration_s);
    if eligible.is_empty() {
        return Err(PipelineError::NoEligibleCourses {
            min_participants: config.min_participants,
            duration_s: config.block_duration_s,
        });
    }
    build_for(dataset, &eligible, config)
}

/// Empirical distribution of location errors in meters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    /// Sorted ascending.
    pub distances: Vec<f64>,
    pub within_50: f64,
    pub within_100: f64,
    pub within_200: f64,
}

impl AccuracyReport {
    pub fn from_distances(mut distances: Vec<f64>) -> Option<Self> {
        if distances.is_empty() {
            return None;
        }
        distances.sort_by(f64::total_cmp);
        let mut r = Self {
            distances,
            within_50: 0.0,
            within_100: 0.0,
            within_200: 0.0,
        };
        r.within_50 = r.fraction_within(50.0);
        r.within_100 = r.fraction_within(100.0);
        r.within_200 = r.fraction_within(200.0);
        Some(r)
    }

    pub fn fraction_within(&self, meters: f64) -> f64 {
        let n = self.distances.partition_point(|&d| d <= meters);
        n as f64 / self.distances.len() as f64
    }

    /// `(distance, cumulative fraction)` steps, ending at 1.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let n = self.distances.len() as f64;
        self.distances
            .iter()
            .enumerate()
            .map(|(i, &d)| (d, (i + 1) as f64 / n))
            .collect()
    }

    pub fn max_error(&self) -> f64 {
        *self.distances.last().unwrap()
    }
}

/// Distance of every accepted estimate to its block's official location.
pub fn evaluate_accuracy(estimates: &[BinLocationEstimate]) -> Result<AccuracyReport, PipelineError> {
    let distances = estimates
        .iter()
        .filter_map(|e| Some(haversine(e.location?, e.block.official_location?).value()))
        .collect();
    AccuracyReport::from_distances(distances).ok_or(PipelineError::NoOfficialOverlap)
}
