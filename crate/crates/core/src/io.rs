//! CSV ingestion and output.
//!
//! Every input file carries a fixed header. In lenient mode a row that fails
//! to parse or violates a record invariant is skipped and reported; in strict
//! mode the first such row aborts the load.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::attendance::{AttendanceMatrix, MatrixError, SessionCount, SessionKey};
use crate::model::{
    CampusBoundary, CourseId, CourseRoster, Dataset, GeoPoint, Grade, GradeRecord, LocationFix, MessageEvent,
    ModelError, ParticipantId, ProximityScan, ScheduleBlock, Timestamp, DEFAULT_SEMESTER_WEEKS,
};
use crate::pipeline::{AccuracyReport, AttendeeTable, LocationTable, PipelineOutput};

pub const FIXES: &str = "fixes.csv";
pub const SCANS: &str = "scans.csv";
pub const ROSTER: &str = "roster.csv";
pub const SCHEDULE: &str = "schedule.csv";
pub const GRADES: &str = "grades.csv";
pub const MESSAGES: &str = "messages.csv";
pub const CAMPUS: &str = "campus.csv";
pub const DATASET_FILES: [&str; 7] = [FIXES, SCANS, ROSTER, SCHEDULE, GRADES, MESSAGES, CAMPUS];

pub const ATTENDANCE: &str = "attendance.csv";
pub const LOCATIONS: &str = "locations.csv";
pub const ACCURACY: &str = "accuracy.csv";
pub const ATTENDEES: &str = "attendees.csv";
pub const TRUTH: &str = "truth.csv";
pub const TRUE_LOCATIONS: &str = "true_locations.csv";

const FIXES_HEADER: &[&str] = &["participant", "t", "lat", "lon", "accuracy"];
const SCANS_HEADER: &[&str] = &["scanner", "seen", "t"];
const ROSTER_HEADER: &[&str] = &["course", "participant"];
const SCHEDULE_HEADER: &[&str] = &["course", "start", "duration_s", "week", "official_lat", "official_lon"];
const GRADES_HEADER: &[&str] = &["participant", "course", "grade", "no_show"];
const MESSAGES_HEADER: &[&str] = &["sender", "receiver", "t"];
const CAMPUS_HEADER: &[&str] = &["lat", "lon"];
const ATTENDANCE_HEADER: &[&str] = &[
    "participant",
    "course",
    "block_start",
    "week",
    "attended_bins",
    "estimated_bins",
    "fraction",
];
const LOCATIONS_HEADER: &[&str] = &["course", "block_start", "bin_index", "lat", "lon", "cluster_size"];
const ACCURACY_HEADER: &[&str] = &["distance_m", "cum_fraction"];
const ATTENDEES_HEADER: &[&str] = &["course", "block_start", "bin_index", "participant"];
const TRUTH_HEADER: &[&str] = &["student", "course", "block_start", "bin_index", "present"];
const TRUE_LOCATIONS_HEADER: &[&str] = &["course", "block_start", "bin_index", "lat", "lon"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: header {found:?} does not match expected {expected:?}")]
    Header {
        file: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{file}:{line}: {message}")]
    Row { file: String, line: u64, message: String },
    #[error("{0}: {1}")]
    Invalid(String, String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub strict: bool,
    pub weeks: u32,
    /// Optional half-open `[start, end)` bound on every timestamp.
    pub window: Option<(Timestamp, Timestamp)>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            strict: false,
            weeks: DEFAULT_SEMESTER_WEEKS,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u64,
    pub message: String,
}

/// Rows skipped in lenient mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rejected: Vec<Diagnostic>,
}

struct Loader<'a> {
    options: &'a ParseOptions,
    report: ParseReport,
    participants: HashMap<String, ParticipantId>,
    courses: HashMap<String, CourseId>,
}

type Row = (u64, csv::StringRecord);

impl<'a> Loader<'a> {
    fn new(options: &'a ParseOptions) -> Self {
        Self {
            options,
            report: ParseReport::default(),
            participants: HashMap::new(),
            courses: HashMap::new(),
        }
    }

    fn participant(&mut self, raw: &str) -> Result<ParticipantId, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err("empty participant id".into());
        }
        Ok(self
            .participants
            .entry(raw.to_string())
            .or_insert_with(|| ParticipantId::new(raw))
            .clone())
    }

    fn course(&mut self, raw: &str) -> Result<CourseId, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err("empty course id".into());
        }
        Ok(self
            .courses
            .entry(raw.to_string())
            .or_insert_with(|| CourseId::new(raw))
            .clone())
    }

    fn timestamp(&self, raw: &str) -> Result<Timestamp, String> {
        let t: Timestamp = num(raw, "timestamp")?;
        if let Some((start, end)) = self.options.window {
            if t < start || t >= end {
                return Err(ModelError::OutsideWindow { t, start, end }.to_string());
            }
        }
        Ok(t)
    }

    /// Applies the strict/lenient policy to one row outcome.
    fn settle<T>(&mut self, file: &str, line: u64, outcome: Result<T, String>) -> Result<Option<T>, IoError> {
        match outcome {
            Ok(v) => Ok(Some(v)),
            Err(message) if self.options.strict => Err(IoError::Row {
                file: file.to_string(),
                line,
                message,
            }),
            Err(message) => {
                self.report.rejected.push(Diagnostic {
                    file: file.to_string(),
                    line,
                    message,
                });
                Ok(None)
            }
        }
    }
}

fn num<T: FromStr>(raw: &str, what: &str) -> Result<T, String> {
    raw.trim().parse().map_err(|_| format!("invalid {what} {raw:?}"))
}

fn model<T>(r: Result<T, ModelError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn read_table(dir: &Path, file: &str, header: &[&str]) -> Result<Vec<Row>, IoError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(IoError::MissingFile(path));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(&path)?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    // an empty file has no header row at all; treat it as zero rows
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Ok(Vec::new());
    }
    if found != header {
        return Err(IoError::Header {
            file: file.to_string(),
            expected: header.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(rows)
}

fn columns(rec: &csv::StringRecord, n: usize) -> Result<Vec<&str>, String> {
    if rec.len() != n {
        return Err(format!("expected {n} fields, found {}", rec.len()));
    }
    Ok(rec.iter().collect())
}

fn parse_fixes(loader: &mut Loader<'_>, rows: Vec<Row>) -> Result<Vec<LocationFix>, IoError> {
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let parsed = (|| {
            let c = columns(&rec, 5)?;
            let participant = loader.participant(c[0])?;
            let t = loader.timestamp(c[1])?;
            let point = model(GeoPoint::new(num(c[2], "lat")?, num(c[3], "lon")?))?;
            model(LocationFix::new(participant, t, point, num(c[4], "accuracy")?))
        })();
        if let Some(f) = loader.settle(FIXES, line, parsed)? {
            out.push(f);
        }
    }
    Ok(out)
}

fn parse_scans(loader: &mut Loader<'_>, rows: Vec<Row>) -> Result<Vec<ProximityScan>, IoError> {
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let parsed = (|| {
            let c = columns(&rec, 3)?;
            let scanner = loader.participant(c[0])?;
            let seen = loader.participant(c[1])?;
            model(ProximityScan::new(scanner, seen, loader.timestamp(c[2])?))
        })();
        if let Some(s) = loader.settle(SCANS, line, parsed)? {
            out.push(s);
        }
    }
    Ok(out)
}

fn parse_messages(loader: &mut Loader<'_>, rows: Vec<Row>) -> Result<Vec<MessageEvent>, IoError> {
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let parsed = (|| {
            let c = columns(&rec, 3)?;
            let sender = loader.participant(c[0])?;
            let receiver = loader.participant(c[1])?;
            model(MessageEvent::new(sender, receiver, loader.timestamp(c[2])?))
        })();
        if let Some(m) = loader.settle(MESSAGES, line, parsed)? {
            out.push(m);
        }
    }
    Ok(out)
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" | "" => Ok(false),
        other => Err(format!("invalid flag {other:?}")),
    }
}

fn parse_grades(loader: &mut Loader<'_>, rows: Vec<Row>) -> Result<Vec<GradeRecord>, IoError> {
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let parsed = (|| {
            let c = columns(&rec, 4)?;
            let participant = loader.participant(c[0])?;
            let course = loader.course(c[1])?;
            let no_show = parse_bool(c[3])?;
            let grade = match (no_show, c[2].is_empty()) {
                (true, true) => None,
                (true, false) => return Err("grade given for a no-show".to_string()),
                (false, true) => return Err("missing grade".to_string()),
                (false, false) => Some(model(Grade::parse(c[2]))?),
            };
            Ok(GradeRecord {
                participant,
                course,
                grade,
            })
        })();
        if let Some(g) = loader.settle(GRADES, line, parsed)? {
            out.push(g);
        }
    }
    Ok(out)
}

fn parse_campus(loader: &mut Loader<'_>, rows: Vec<Row>) -> Result<Option<CampusBoundary>, IoError> {
    let mut ring = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        let parsed = (|| {
            let c = columns(&rec, 2)?;
            model(GeoPoint::new(num(c[0], "lat")?, num(c[1], "lon")?))
        })();
        if let Some(p) = loader.settle(CAMPUS, line, parsed)? {
            ring.push(p);
        }
    }
    if ring.is_empty() {
        return Ok(None);
    }
    CampusBoundary::new(ring)
        .map(Some)
        .map_err(|e| IoError::Invalid(CAMPUS.to_string(), e.to_string()))
}

fn parse_rosters(loader: &mut Loader<'_>, roster_rows: Vec<Row>, schedule_rows: Vec<Row>) -> Result<Vec<CourseRoster>, IoError> {
    let mut members: BTreeMap<CourseId, BTreeSet<ParticipantId>> = BTreeMap::new();
    for (line, rec) in roster_rows {
        let parsed = (|| {
            let c = columns(&rec, 2)?;
            Ok((loader.course(c[0])?, loader.participant(c[1])?))
        })();
        if let Some((course, p)) = loader.settle(ROSTER, line, parsed)? {
            members.entry(course).or_default().insert(p);
        }
    }

    let weeks = loader.options.weeks;
    let mut blocks: BTreeMap<CourseId, Vec<(u64, ScheduleBlock)>> = BTreeMap::new();
    for (line, rec) in schedule_rows {
        let parsed = (|| {
            let c = columns(&rec, 6)?;
            let course = loader.course(c[0])?;
            let start = loader.timestamp(c[1])?;
            let official = match (c[4].is_empty(), c[5].is_empty()) {
                (true, true) => None,
                (false, false) => Some(model(GeoPoint::new(num(c[4], "official_lat")?, num(c[5], "official_lon")?))?),
                _ => return Err("official location needs both lat and lon".to_string()),
            };
            model(ScheduleBlock::new(
                course,
                start,
                num(c[2], "duration_s")?,
                num(c[3], "week")?,
                weeks,
                official,
            ))
        })();
        if let Some(b) = loader.settle(SCHEDULE, line, parsed)? {
            blocks.entry(b.course.clone()).or_default().push((line, b));
        }
    }

    let mut rosters = Vec::with_capacity(members.len());
    for (course, participants) in members {
        let mut course_blocks = blocks.remove(&course).unwrap_or_default();
        course_blocks.sort_by_key(|(_, b)| b.start);
        let mut kept: Vec<ScheduleBlock> = Vec::with_capacity(course_blocks.len());
        for (line, b) in course_blocks {
            let overlap = kept.last().filter(|prev| b.start < prev.end()).map(|prev| {
                ModelError::OverlappingBlocks {
                    course: course.clone(),
                    first: prev.start,
                    second: b.start,
                }
                .to_string()
            });
            let outcome = match overlap {
                Some(message) => Err(message),
                None => Ok(b),
            };
            if let Some(b) = loader.settle(SCHEDULE, line, outcome)? {
                kept.push(b);
            }
        }
        let roster = CourseRoster::new(course, participants, kept).expect("validated above");
        rosters.push(roster);
    }
    for (course, orphan) in blocks {
        for (line, _) in orphan {
            loader.settle::<()>(SCHEDULE, line, Err(format!("course {course} has no roster")))?;
        }
    }
    Ok(rosters)
}

/// Loads all seven dataset files from `dir`.
pub fn parse_dataset(dir: &Path, options: &ParseOptions) -> Result<(Dataset, ParseReport), IoError> {
    let mut loader = Loader::new(options);
    let fixes = read_table(dir, FIXES, FIXES_HEADER)?;
    let scans = read_table(dir, SCANS, SCANS_HEADER)?;
    let roster = read_table(dir, ROSTER, ROSTER_HEADER)?;
    let schedule = read_table(dir, SCHEDULE, SCHEDULE_HEADER)?;
    let grades = read_table(dir, GRADES, GRADES_HEADER)?;
    let messages = read_table(dir, MESSAGES, MESSAGES_HEADER)?;
    let campus = read_table(dir, CAMPUS, CAMPUS_HEADER)?;
    let dataset = Dataset {
        fixes: parse_fixes(&mut loader, fixes)?,
        scans: parse_scans(&mut loader, scans)?,
        rosters: parse_rosters(&mut loader, roster, schedule)?,
        grades: parse_grades(&mut loader, grades)?,
        messages: parse_messages(&mut loader, messages)?,
        campus: parse_campus(&mut loader, campus)?,
    };
    Ok((dataset, loader.report))
}

/// Grades alone, for analyses that do not need sensor data.
pub fn read_grades(dir: &Path, options: &ParseOptions) -> Result<(Vec<GradeRecord>, ParseReport), IoError> {
    let mut loader = Loader::new(options);
    let rows = read_table(dir, GRADES, GRADES_HEADER)?;
    let grades = parse_grades(&mut loader, rows)?;
    Ok((grades, loader.report))
}

pub fn read_messages(dir: &Path, options: &ParseOptions) -> Result<(Vec<MessageEvent>, ParseReport), IoError> {
    let mut loader = Loader::new(options);
    let rows = read_table(dir, MESSAGES, MESSAGES_HEADER)?;
    let messages = parse_messages(&mut loader, rows)?;
    Ok((messages, loader.report))
}

fn writer(dir: &Path, file: &str, header: &[&str]) -> Result<csv::Writer<File>, IoError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(file))?;
    w.write_record(header)?;
    Ok(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the seven input files. Records are emitted in the order held.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let mut w = writer(dir, FIXES, FIXES_HEADER)?;
    for f in &ds.fixes {
        w.write_record([
            f.participant.as_str(),
            &f.t.to_string(),
            &f.point.lat.to_string(),
            &f.point.lon.to_string(),
            &f.accuracy.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, SCANS, SCANS_HEADER)?;
    for s in &ds.scans {
        w.write_record([s.scanner.as_str(), s.seen.as_str(), &s.t.to_string()])?;
    }
    w.flush()?;

    let mut roster = writer(dir, ROSTER, ROSTER_HEADER)?;
    let mut schedule = writer(dir, SCHEDULE, SCHEDULE_HEADER)?;
    for r in &ds.rosters {
        for p in &r.participants {
            roster.write_record([r.course.as_str(), p.as_str()])?;
        }
        for b in &r.blocks {
            schedule.write_record([
                b.course.as_str(),
                &b.start.to_string(),
                &b.duration.to_string(),
                &b.week.to_string(),
                &opt(b.official_location.map(|p| p.lat)),
                &opt(b.official_location.map(|p| p.lon)),
            ])?;
        }
    }
    roster.flush()?;
    schedule.flush()?;

    let mut w = writer(dir, GRADES, GRADES_HEADER)?;
    for g in &ds.grades {
        let grade = g.grade.map(|g| g.to_string()).unwrap_or_default();
        let no_show = if g.no_show() { "1" } else { "0" };
        w.write_record([g.participant.as_str(), g.course.as_str(), &grade, no_show])?;
    }
    w.flush()?;

    let mut w = writer(dir, MESSAGES, MESSAGES_HEADER)?;
    for m in &ds.messages {
        w.write_record([m.sender.as_str(), m.receiver.as_str(), &m.t.to_string()])?;
    }
    w.flush()?;

    let mut w = writer(dir, CAMPUS, CAMPUS_HEADER)?;
    for p in ds.campus.iter().flat_map(|c| c.ring()) {
        w.write_record([p.lat.to_string(), p.lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_attendance(dir: &Path, matrix: &AttendanceMatrix) -> Result<(), IoError> {
    let mut w = writer(dir, ATTENDANCE, ATTENDANCE_HEADER)?;
    for (p, key, c) in matrix.entries() {
        w.write_record([
            p.as_str(),
            key.course.as_str(),
            &key.block_start.to_string(),
            &c.week.to_string(),
            &c.attended_bins.to_string(),
            &c.estimated_bins.to_string(),
            &c.fraction().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `locations.csv` (accepted bins only) and `attendees.csv`.
pub fn write_pipeline_bins(dir: &Path, output: &PipelineOutput) -> Result<(), IoError> {
    let mut w = writer(dir, LOCATIONS, LOCATIONS_HEADER)?;
    for e in output.accepted() {
        let loc = e.location.expect("accepted");
        w.write_record([
            e.block.course.as_str(),
            &e.block.start.to_string(),
            &e.bin.index.to_string(),
            &loc.lat.to_string(),
            &loc.lon.to_string(),
            &e.cluster.as_ref().map_or(0, |c| c.len()).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, ATTENDEES, ATTENDEES_HEADER)?;
    for b in &output.attendance {
        for p in &b.attendees {
            w.write_record([
                b.session.course.as_str(),
                &b.session.block_start.to_string(),
                &b.bin_index.to_string(),
                p.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_accuracy(dir: &Path, report: Option<&AccuracyReport>) -> Result<(), IoError> {
    let mut w = writer(dir, ACCURACY, ACCURACY_HEADER)?;
    for (d, f) in report.map(AccuracyReport::cdf).unwrap_or_default() {
        w.write_record([d.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn strict_rows(dir: &Path, file: &str, header: &[&str], width: usize) -> Result<Vec<(u64, Vec<String>)>, IoError> {
    read_table(dir, file, header)?
        .into_iter()
        .map(|(line, rec)| {
            let cols = columns(&rec, width).map_err(|message| IoError::Row {
                file: file.to_string(),
                line,
                message,
            })?;
            Ok((line, cols.into_iter().map(str::to_string).collect()))
        })
        .collect()
}

fn field<T: FromStr>(file: &str, line: u64, raw: &str, what: &str) -> Result<T, IoError> {
    num(raw, what).map_err(|message| IoError::Row {
        file: file.to_string(),
        line,
        message,
    })
}

pub fn read_attendance(dir: &Path, bins_per_block: u32) -> Result<AttendanceMatrix, IoError> {
    let mut matrix = AttendanceMatrix::new(bins_per_block);
    for (line, c) in strict_rows(dir, ATTENDANCE, ATTENDANCE_HEADER, 7)? {
        let count = SessionCount {
            week: field(ATTENDANCE, line, &c[3], "week")?,
            attended_bins: field(ATTENDANCE, line, &c[4], "attended_bins")?,
            estimated_bins: field(ATTENDANCE, line, &c[5], "estimated_bins")?,
        };
        let key = SessionKey::new(CourseId::new(&c[1]), field(ATTENDANCE, line, &c[2], "block_start")?);
        matrix
            .insert(ParticipantId::new(&c[0]), key, count)
            .map_err(|e: MatrixError| IoError::Row {
                file: ATTENDANCE.to_string(),
                line,
                message: e.to_string(),
            })?;
    }
    Ok(matrix)
}

pub fn read_locations(dir: &Path) -> Result<LocationTable, IoError> {
    let mut out = BTreeMap::new();
    for (line, c) in strict_rows(dir, LOCATIONS, LOCATIONS_HEADER, 6)? {
        let key = SessionKey::new(CourseId::new(&c[0]), field(LOCATIONS, line, &c[1], "block_start")?);
        let point = GeoPoint::new(field(LOCATIONS, line, &c[3], "lat")?, field(LOCATIONS, line, &c[4], "lon")?)
            .map_err(|e| IoError::Row {
                file: LOCATIONS.to_string(),
                line,
                message: e.to_string(),
            })?;
        let size = field(LOCATIONS, line, &c[5], "cluster_size")?;
        out.insert((key, field(LOCATIONS, line, &c[2], "bin_index")?), (point, size));
    }
    Ok(out)
}

pub fn read_attendees(dir: &Path) -> Result<AttendeeTable, IoError> {
    let mut out: AttendeeTable = BTreeMap::new();
    let mut ids: HashMap<String, ParticipantId> = HashMap::new();
    for (line, c) in strict_rows(dir, ATTENDEES, ATTENDEES_HEADER, 4)? {
        let key = SessionKey::new(CourseId::new(&c[0]), field(ATTENDEES, line, &c[1], "block_start")?);
        let bin: usize = field(ATTENDEES, line, &c[2], "bin_index")?;
        let id = ids.entry(c[3].clone()).or_insert_with(|| ParticipantId::new(&c[3])).clone();
        out.entry((key, bin)).or_default().insert(id);
    }
    Ok(out)
}

/// Simulator ground truth: presence per `(session, participant)` bin and the
/// true classroom per `(session, bin)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TruthTables {
    pub presence: BTreeMap<SessionKey, BTreeMap<ParticipantId, Vec<bool>>>,
    pub locations: BTreeMap<SessionKey, Vec<GeoPoint>>,
}

pub fn write_truth(dir: &Path, truth: &TruthTables) -> Result<(), IoError> {
    let mut w = writer(dir, TRUTH, TRUTH_HEADER)?;
    for (key, people) in &truth.presence {
        for (p, bins) in people {
            for (i, present) in bins.iter().enumerate() {
                w.write_record([
                    p.as_str(),
                    key.course.as_str(),
                    &key.block_start.to_string(),
                    &i.to_string(),
                    if *present { "1" } else { "0" },
                ])?;
            }
        }
    }
    w.flush()?;
    let mut w = writer(dir, TRUE_LOCATIONS, TRUE_LOCATIONS_HEADER)?;
    for (key, points) in &truth.locations {
        for (i, p) in points.iter().enumerate() {
            w.write_record([
                key.course.as_str(),
                &key.block_start.to_string(),
                &i.to_string(),
                &p.lat.to_string(),
                &p.lon.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(dir: &Path) -> Result<TruthTables, IoError> {
    let mut truth = TruthTables::default();
    let mut ids: HashMap<String, ParticipantId> = HashMap::new();
    for (line, c) in strict_rows(dir, TRUTH, TRUTH_HEADER, 5)? {
        let key = SessionKey::new(CourseId::new(&c[1]), field(TRUTH, line, &c[2], "block_start")?);
        let bin: usize = field(TRUTH, line, &c[3], "bin_index")?;
        let present = parse_bool(&c[4]).map_err(|message| IoError::Row {
            file: TRUTH.to_string(),
            line,
            message,
        })?;
        let id = ids.entry(c[0].clone()).or_insert_with(|| ParticipantId::new(&c[0])).clone();
        let bins = truth.presence.entry(key).or_default().entry(id).or_default();
        if bins.len() <= bin {
            bins.resize(bin + 1, false);
        }
        bins[bin] = present;
    }
    for (line, c) in strict_rows(dir, TRUE_LOCATIONS, TRUE_LOCATIONS_HEADER, 5)? {
        let key = SessionKey::new(CourseId::new(&c[0]), field(TRUE_LOCATIONS, line, &c[1], "block_start")?);
        let bin: usize = field(TRUE_LOCATIONS, line, &c[2], "bin_index")?;
        let point = GeoPoint {
            lat: field(TRUE_LOCATIONS, line, &c[3], "lat")?,
            lon: field(TRUE_LOCATIONS, line, &c[4], "lon")?,
        };
        let points = truth.locations.entry(key).or_default();
        if points.len() <= bin {
            points.resize(bin + 1, point);
        }
        points[bin] = point;
    }
    Ok(truth)
}

/// Writes `contents` to `dir/file`, creating `dir` as needed.
pub fn write_text(dir: &Path, file: &str, contents: &str) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let mut f = File::create(dir.join(file))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}
