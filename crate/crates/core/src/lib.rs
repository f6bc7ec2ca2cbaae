//! Class location and attendance reconstruction from Bluetooth proximity
//! scans and GPS fixes, with the statistics used to relate attendance to
//! grades and to contacts' attendance, and a simulator that produces
//! datasets with known ground truth.

pub mod analysis;
pub mod attendance;
pub mod config;
pub mod geo;
pub mod io;
pub mod manifest;
pub mod model;
pub mod peer;
pub mod pipeline;
pub mod proximity;
pub mod score;
pub mod sim;
pub mod stats;

pub use attendance::{AttendanceMatrix, SessionCount, SessionKey};
pub use model::{
    CampusBoundary, CourseId, CourseRoster, Dataset, GeoPoint, Grade, GradeRecord, LocationFix, MessageEvent,
    ParticipantId, ProximityScan, ScheduleBlock, TimeBin, Timestamp,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use sim::{generate, SimConfig, Simulation};
