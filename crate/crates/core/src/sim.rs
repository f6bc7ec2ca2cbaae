//! Synthetic campus generator with known ground truth.
//!
//! Students carry a latent ability that drives both their course grades and
//! (scaled by `coupling`) their baseline attendance. Attendance then decays
//! week by week at a rate set by the grade band of each enrolment. Present
//! students report noisy fixes around the classroom and scan a few seat
//! neighbors over Bluetooth; absent students report fixes around their home.
//! The text-message network hits a target mean degree, with a `homophily`
//! share of ties drawn between students of similar ability.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
use thiserror::Error;

use crate::attendance::SessionKey;
use crate::geo::{contains, offset_meters};
use crate::io::TruthTables;
use crate::model::{
    CampusBoundary, CourseId, CourseRoster, Dataset, GeoPoint, Grade, GradeRecord, LocationFix, MessageEvent,
    ModelError, ParticipantId, ProximityScan, ScheduleBlock, Timestamp, DEFAULT_BIN_WIDTH_S, DEFAULT_BLOCK_DURATION_S,
    DEFAULT_SEMESTER_WEEKS,
};
use crate::stats::PerformanceGroup;

/// Monday 2 September 2013, 00:00 UTC.
pub const SEMESTER_START: Timestamp = 1_378_080_000;
const DAY: i64 = 86_400;
const WEEK: i64 = 7 * DAY;
/// Ten weekly slots: Monday..Friday, 08:00 and 13:00.
const SLOTS: usize = 10;

/// Cumulative share of grades up to each of -3, 00, 02, 4, 7, 10.
const GRADE_CUMULATIVE: [f64; 6] = [0.05, 0.12, 0.22, 0.38, 0.63, 0.85];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("truth run {truth} does not match pipeline input run {outputs}")]
    RunMismatch { truth: String, outputs: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_students: usize,
    pub n_courses: usize,
    pub courses_per_student: usize,
    pub weeks: u32,
    pub campus: Vec<GeoPoint>,
    pub buildings: Vec<GeoPoint>,
    pub bin_width_s: i64,
    pub block_duration_s: i64,
    pub fixes_per_bin: usize,
    pub gps_sigma: f64,
    pub accuracy_min_m: f64,
    pub accuracy_max_m: f64,
    pub bt_detect_prob: f64,
    /// Seat neighbors each present student can see (split evenly per side).
    pub scan_neighbors: usize,
    pub homophily: f64,
    pub mean_degree: f64,
    pub coupling: f64,
    pub base_attendance: f64,
    pub ability_spread: f64,
    pub attendance_noise: f64,
    /// Weekly attendance decay in percentage points, per grade band.
    pub decay_low: f64,
    pub decay_moderate: f64,
    pub decay_high: f64,
    pub no_show_prob: f64,
    pub oncampus_absent_frac: f64,
    pub relocation_prob: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let campus = vec![
            GeoPoint { lat: 55.780, lon: 12.508 },
            GeoPoint { lat: 55.780, lon: 12.530 },
            GeoPoint { lat: 55.792, lon: 12.530 },
            GeoPoint { lat: 55.792, lon: 12.508 },
        ];
        let buildings = [55.783, 55.789]
            .iter()
            .flat_map(|&lat| (0..5).map(move |k| GeoPoint { lat, lon: 12.512 + 0.004 * k as f64 }))
            .collect();
        Self {
            seed: 0,
            n_students: 200,
            n_courses: 10,
            courses_per_student: 4,
            weeks: DEFAULT_SEMESTER_WEEKS,
            campus,
            buildings,
            bin_width_s: DEFAULT_BIN_WIDTH_S,
            block_duration_s: DEFAULT_BLOCK_DURATION_S,
            fixes_per_bin: 2,
            gps_sigma: 25.0,
            accuracy_min_m: 5.0,
            accuracy_max_m: 50.0,
            bt_detect_prob: 0.8,
            scan_neighbors: 6,
            homophily: 0.5,
            mean_degree: 4.4,
            coupling: 0.5,
            base_attendance: 0.72,
            ability_spread: 0.12,
            attendance_noise: 0.05,
            decay_low: 1.4,
            decay_moderate: 0.6,
            decay_high: 0.4,
            no_show_prob: 0.05,
            oncampus_absent_frac: 0.0,
            relocation_prob: 0.0,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {v} outside [0, 1]")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<CampusBoundary, SimError> {
        for (name, v) in [
            ("bt_detect_prob", self.bt_detect_prob),
            ("homophily", self.homophily),
            ("coupling", self.coupling),
            ("no_show_prob", self.no_show_prob),
            ("oncampus_absent_frac", self.oncampus_absent_frac),
            ("relocation_prob", self.relocation_prob),
        ] {
            unit(name, v)?;
        }
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_students < 2 {
            return bad("n_students must be at least 2");
        }
        if self.n_courses == 0 || self.courses_per_student == 0 {
            return bad("need at least one course per student");
        }
        if self.weeks == 0 {
            return bad("weeks must be positive");
        }
        if self.bin_width_s <= 0 || self.block_duration_s % self.bin_width_s != 0 {
            return bad("bin_width_s must divide block_duration_s");
        }
        if self.block_duration_s > 5 * 3_600 {
            return bad("block_duration_s longer than a slot");
        }
        let bad_sigma = self.gps_sigma.is_nan() || self.gps_sigma < 0.0;
        let bad_min = self.accuracy_min_m.is_nan() || self.accuracy_min_m <= 0.0;
        if bad_sigma || bad_min || self.accuracy_max_m.is_nan() || self.accuracy_max_m < self.accuracy_min_m {
            return bad("gps_sigma must be >= 0 and 0 < accuracy_min_m <= accuracy_max_m");
        }
        if self.mean_degree.is_nan() || self.mean_degree < 0.0 {
            return bad("mean_degree must be non-negative");
        }
        if self.buildings.is_empty() {
            return bad("need at least one building");
        }
        let campus = CampusBoundary::new(self.campus.clone())?;
        if let Some(b) = self.buildings.iter().find(|b| !contains(&campus, **b)) {
            return Err(SimError::Config(format!("building {b:?} outside campus")));
        }
        Ok(campus)
    }

    /// Stable identifier of this exact configuration.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    fn decay(&self, group: PerformanceGroup) -> f64 {
        match group {
            PerformanceGroup::Low => self.decay_low,
            PerformanceGroup::Moderate => self.decay_moderate,
            PerformanceGroup::High => self.decay_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLog {
    pub run_id: String,
    pub tables: TruthTables,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: GroundTruthLog,
}

struct Student {
    id: ParticipantId,
    ability: f64,
    base: f64,
    home: GeoPoint,
}

struct Course {
    id: CourseId,
    slot: usize,
    building: usize,
    /// Indices into the student list, ascending.
    members: Vec<usize>,
}

/// Independent streams so that, for a fixed seed, changing one mechanism's
/// parameters leaves the draws of the others untouched.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn centroid(ring: &[GeoPoint]) -> GeoPoint {
    let n = ring.len() as f64;
    GeoPoint {
        lat: ring.iter().map(|p| p.lat).sum::<f64>() / n,
        lon: ring.iter().map(|p| p.lon).sum::<f64>() / n,
    }
}

fn grade_from_latent(latent: f64, cuts: &[f64; 6]) -> Grade {
    let idx = cuts.iter().take_while(|&&c| latent > c).count();
    Grade::ALL[idx]
}

fn random_on_campus(rng: &mut ChaCha8Rng, campus: &CampusBoundary) -> GeoPoint {
    let ring = campus.ring();
    let (mut s, mut n, mut w, mut e) = (90.0f64, -90.0f64, 180.0f64, -180.0f64);
    for p in ring {
        s = s.min(p.lat);
        n = n.max(p.lat);
        w = w.min(p.lon);
        e = e.max(p.lon);
    }
    loop {
        let p = GeoPoint {
            lat: rng.gen_range(s..=n),
            lon: rng.gen_range(w..=e),
        };
        if contains(campus, p) {
            return p;
        }
    }
}

pub fn generate(config: &SimConfig) -> Result<Simulation, SimError> {
    let campus = config.validate()?;
    let centre = centroid(campus.ring());
    let mut population = stream(config.seed, 0);

    let students: Vec<Student> = (0..config.n_students)
        .map(|i| {
            let ability: f64 = population.sample(StandardNormal);
            let noise: f64 = population.sample(StandardNormal);
            let base = config.base_attendance
                + config.ability_spread * config.coupling * ability
                + config.attendance_noise * noise;
            let distance = population.gen_range(3_000.0..10_000.0);
            let bearing: f64 = population.gen_range(0.0..std::f64::consts::TAU);
            Student {
                id: ParticipantId::new(format!("s{i:05}")),
                ability,
                base,
                home: offset_meters(centre, distance * bearing.cos(), distance * bearing.sin()),
            }
        })
        .collect();

    let mut courses: Vec<Course> = (0..config.n_courses)
        .map(|c| Course {
            id: CourseId::new(format!("c{c:03}")),
            slot: c % SLOTS,
            building: c % config.buildings.len(),
            members: Vec::new(),
        })
        .collect();
    let mut order: Vec<usize> = (0..config.n_courses).collect();
    for s in 0..students.len() {
        order.shuffle(&mut population);
        let mut used = [false; SLOTS];
        let mut taken = 0;
        for &c in &order {
            if taken == config.courses_per_student {
                break;
            }
            if !used[courses[c].slot] {
                used[courses[c].slot] = true;
                courses[c].members.push(s);
                taken += 1;
            }
        }
    }
    courses.retain(|c| !c.members.is_empty());

    let std_normal = StatNormal::new(0.0, 1.0).expect("unit normal");
    let cuts = GRADE_CUMULATIVE.map(|p| std_normal.inverse_cdf(p));
    let mut grades = Vec::new();
    // latent grade per (course index, student index)
    let mut latent_grade: BTreeMap<(usize, usize), Grade> = BTreeMap::new();
    for (ci, course) in courses.iter().enumerate() {
        for &s in &course.members {
            let eps: f64 = population.sample(StandardNormal);
            let grade = grade_from_latent(0.8 * students[s].ability + 0.6 * eps, &cuts);
            latent_grade.insert((ci, s), grade);
            let no_show = population.gen_bool(config.no_show_prob);
            grades.push(GradeRecord {
                participant: students[s].id.clone(),
                course: course.id.clone(),
                grade: (!no_show).then_some(grade),
            });
        }
    }

    let messages = message_network(config, &students);

    let mut sensing = stream(config.seed, 2);
    let bins_per_block = (config.block_duration_s / config.bin_width_s) as usize;
    let acc_mid = (config.accuracy_min_m + config.accuracy_max_m) / 2.0;
    let mut fixes = Vec::new();
    let mut scans = Vec::new();
    let mut rosters = Vec::with_capacity(courses.len());
    let mut truth = TruthTables::default();

    for (ci, course) in courses.iter().enumerate() {
        let scheduled = config.buildings[course.building];
        let day = (course.slot / 2) as i64;
        let hour = if course.slot % 2 == 0 { 8 } else { 13 };
        let mut blocks = Vec::with_capacity(config.weeks as usize);
        for week in 1..=config.weeks {
            let start = SEMESTER_START + i64::from(week - 1) * WEEK + day * DAY + hour * 3_600;
            let block = ScheduleBlock::new(
                course.id.clone(),
                start,
                config.block_duration_s,
                week,
                config.weeks,
                Some(scheduled),
            )?;
            let room = if config.buildings.len() > 1 && sensing.gen_bool(config.relocation_prob) {
                let other = sensing.gen_range(0..config.buildings.len() - 1);
                config.buildings[if other >= course.building { other + 1 } else { other }]
            } else {
                scheduled
            };

            let probability: Vec<f64> = course
                .members
                .iter()
                .map(|&s| {
                    let group = PerformanceGroup::of(latent_grade[&(ci, s)]);
                    let drift = config.decay(group) / 100.0 * f64::from(week - 1);
                    (students[s].base - drift).clamp(0.0, 1.0)
                })
                .collect();
            let mut seats: Vec<usize> = (0..course.members.len()).collect();
            seats.shuffle(&mut sensing);

            let session = SessionKey::new(course.id.clone(), start);
            let mut presence: Vec<Vec<bool>> = vec![Vec::with_capacity(bins_per_block); course.members.len()];
            for b in 0..bins_per_block {
                let bin_start = start + b as i64 * config.bin_width_s;
                let present: Vec<bool> = probability.iter().map(|&p| sensing.gen_bool(p)).collect();
                for (k, &s) in course.members.iter().enumerate() {
                    presence[k].push(present[k]);
                    let anchor = if present[k] {
                        room
                    } else if config.oncampus_absent_frac > 0.0 && sensing.gen_bool(config.oncampus_absent_frac) {
                        random_on_campus(&mut sensing, &campus)
                    } else {
                        students[s].home
                    };
                    for _ in 0..config.fixes_per_bin {
                        let t = bin_start + sensing.gen_range(0..config.bin_width_s);
                        let accuracy = sensing.gen_range(config.accuracy_min_m..=config.accuracy_max_m);
                        let sigma = config.gps_sigma * accuracy / acc_mid;
                        let point = if sigma > 0.0 {
                            let noise = Normal::new(0.0, sigma).expect("finite sigma");
                            offset_meters(anchor, noise.sample(&mut sensing), noise.sample(&mut sensing))
                        } else {
                            anchor
                        };
                        fixes.push(LocationFix::new(students[s].id.clone(), t, point, accuracy)?);
                    }
                }
                let seated: Vec<usize> = seats.iter().copied().filter(|&k| present[k]).collect();
                for (a, b) in seat_pairs(seated.len(), config.scan_neighbors) {
                    let (ka, kb) = (seated[a], seated[b]);
                    let (ida, idb) = (&students[course.members[ka]].id, &students[course.members[kb]].id);
                    for (from, to) in [(ida, idb), (idb, ida)] {
                        if sensing.gen_bool(config.bt_detect_prob) {
                            let t = bin_start + sensing.gen_range(0..config.bin_width_s);
                            scans.push(ProximityScan::new(from.clone(), to.clone(), t)?);
                        }
                    }
                }
            }
            truth.locations.insert(session.clone(), vec![room; bins_per_block]);
            truth.presence.insert(
                session,
                course
                    .members
                    .iter()
                    .zip(presence)
                    .map(|(&s, bins)| (students[s].id.clone(), bins))
                    .collect(),
            );
            blocks.push(block);
        }
        let participants: BTreeSet<ParticipantId> = course.members.iter().map(|&s| students[s].id.clone()).collect();
        rosters.push(CourseRoster::new(course.id.clone(), participants, blocks)?);
    }

    Ok(Simulation {
        dataset: Dataset {
            fixes,
            scans,
            rosters,
            grades,
            messages,
            campus: Some(campus),
        },
        truth: GroundTruthLog {
            run_id: config.run_id(),
            tables: truth,
        },
    })
}

/// Undirected seat pairs within `reach / 2` places of each other around a
/// ring of `n` seats; everyone pairs with everyone when the ring is small.
fn seat_pairs(n: usize, reach: usize) -> Vec<(usize, usize)> {
    let half = (reach / 2).max(1);
    if n < 2 {
        return Vec::new();
    }
    if 2 * half + 1 >= n {
        return (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    }
    (0..n).flat_map(|a| (1..=half).map(move |d| (a, (a + d) % n))).collect()
}

fn message_network(config: &SimConfig, students: &[Student]) -> Vec<MessageEvent> {
    let mut rng = stream(config.seed, 1);
    let n = students.len();
    let max_edges = n * (n - 1) / 2;
    let target = ((n as f64 * config.mean_degree / 2.0).round() as usize).min(max_edges);
    // rank by ability so "similar" means nearby in rank
    let mut by_ability: Vec<usize> = (0..n).collect();
    by_ability.sort_by(|&a, &b| students[a].ability.total_cmp(&students[b].ability));
    let window = (n / 50).max(2).min(n - 1);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(target);
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target);
    while edges.len() < target {
        let r = rng.gen_range(0..n);
        let other = if rng.gen_bool(config.homophily) {
            let offset = rng.gen_range(1..=window) as isize * if rng.gen_bool(0.5) { 1 } else { -1 };
            let mut j = r as isize + offset;
            if j < 0 || j >= n as isize {
                j = r as isize - offset;
            }
            j.clamp(0, n as isize - 1) as usize
        } else {
            rng.gen_range(0..n)
        };
        if other == r {
            continue;
        }
        let (a, b) = (by_ability[r], by_ability[other]);
        let pair = (a.min(b), a.max(b));
        if seen.insert(pair) {
            edges.push(pair);
        }
    }

    let span = i64::from(config.weeks) * WEEK;
    let mut messages = Vec::new();
    for (a, b) in edges {
        for _ in 0..rng.gen_range(1..=5) {
            let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let t = SEMESTER_START + rng.gen_range(0..span);
            messages.push(MessageEvent {
                sender: students[from].id.clone(),
                receiver: students[to].id.clone(),
                t,
            });
        }
    }
    messages.sort_by(|x, y| x.t.cmp(&y.t).then_with(|| x.sender.cmp(&y.sender)));
    messages
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peer::build_social_network;

    fn small() -> SimConfig {
        SimConfig {
            seed: 3,
            n_students: 40,
            n_courses: 3,
            courses_per_student: 2,
            weeks: 2,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.dataset.fixes, b.dataset.fixes);
        assert_eq!(a.dataset.scans, b.dataset.scans);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SimConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.dataset.fixes, c.dataset.fixes);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate(&SimConfig { bt_detect_prob: 1.5, ..small() }).is_err());
        assert!(generate(&SimConfig { homophily: -0.1, ..small() }).is_err());
        assert!(generate(&SimConfig { bin_width_s: 7 * 60, ..small() }).is_err());
        let outside = vec![GeoPoint { lat: 10.0, lon: 10.0 }];
        assert!(generate(&SimConfig { buildings: outside, ..small() }).is_err());
    }

    #[test]
    fn network_hits_the_target_degree() {
        let sim = generate(&SimConfig { n_students: 500, ..small() }).unwrap();
        let net = build_social_network(&sim.dataset.messages);
        let degree = 2.0 * net.edge_count() as f64 / 500.0;
        assert!((degree - 4.4).abs() < 0.01, "{degree}");
    }

    #[test]
    fn no_student_double_books_a_slot() {
        let cfg = SimConfig { n_courses: 25, courses_per_student: 6, ..small() };
        let sim = generate(&cfg).unwrap();
        let mut starts: BTreeMap<&ParticipantId, Vec<Timestamp>> = BTreeMap::new();
        for r in &sim.dataset.rosters {
            for p in &r.participants {
                starts.entry(p).or_default().extend(r.blocks.iter().map(|b| b.start));
            }
        }
        for v in starts.values_mut() {
            let before = v.len();
            v.sort_unstable();
            v.dedup();
            assert_eq!(before, v.len());
        }
    }

    #[test]
    fn seat_pairs_cover_small_rings_fully() {
        assert_eq!(seat_pairs(1, 6).len(), 0);
        assert_eq!(seat_pairs(4, 6).len(), 6);
        let big = seat_pairs(20, 6);
        assert_eq!(big.len(), 60);
        assert!(big.iter().all(|(a, b)| a != b));
    }

    #[test]
    fn grade_cuts_follow_the_band_shares() {
        let n = StatNormal::new(0.0, 1.0).unwrap();
        let cuts = GRADE_CUMULATIVE.map(|p| n.inverse_cdf(p));
        assert_eq!(grade_from_latent(-5.0, &cuts), Grade::MinusThree);
        assert_eq!(grade_from_latent(0.0, &cuts), Grade::Seven);
        assert_eq!(grade_from_latent(5.0, &cuts), Grade::Twelve);
    }
}
