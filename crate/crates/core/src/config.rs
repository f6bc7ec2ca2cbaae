//! `key=value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors so
//! typos do not silently fall back to defaults.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::model::GeoPoint;
use crate::peer::PeerStatistic;
use crate::pipeline::PipelineConfig;
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: bad value {value:?} for {key}")]
    Value { line: usize, key: String, value: String },
    #[error("config line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("missing required config key {0:?}")]
    Missing(&'static str),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Minimum recovery metrics accepted by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyThresholds {
    pub min_within_50: f64,
    pub min_within_100: f64,
    pub min_within_200: f64,
    pub min_precision: f64,
    pub min_recall: f64,
    pub min_term_spearman: f64,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        Self {
            min_within_50: 0.0,
            min_within_100: 0.70,
            min_within_200: 0.85,
            min_precision: 0.0,
            min_recall: 0.0,
            min_term_spearman: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub analysis: AnalysisConfig,
    pub sim: SimConfig,
    pub verify: VerifyThresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            seed: None,
            sim: SimConfig {
                bin_width_s: pipeline.bin_width_s,
                block_duration_s: pipeline.block_duration_s,
                ..SimConfig::default()
            },
            pipeline,
            analysis: AnalysisConfig::default(),
            verify: VerifyThresholds::default(),
        }
    }
}

fn points(v: &str) -> Option<Vec<GeoPoint>> {
    v.split(';')
        .map(|pair| {
            let (lat, lon) = pair.split_once(':')?;
            GeoPoint::new(lat.trim().parse().ok()?, lon.trim().parse().ok()?).ok()
        })
        .collect()
}

fn boolean(v: &str) -> Option<bool> {
    match v {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            c.set(key, value).map_err(|unknown| {
                if unknown {
                    ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    }
                } else {
                    ConfigError::Value {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                    }
                }
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::Missing("seed"))
    }

    /// Applies one key. `Err(true)` means unknown key, `Err(false)` a bad value.
    fn set(&mut self, key: &str, v: &str) -> Result<(), bool> {
        fn num<T: FromStr>(v: &str) -> Result<T, bool> {
            v.parse().map_err(|_| false)
        }
        let s = &mut self.sim;
        match key {
            "seed" => self.seed = Some(num(v)?),
            "bin_width_s" => {
                self.pipeline.bin_width_s = num(v)?;
                s.bin_width_s = self.pipeline.bin_width_s;
            }
            "block_duration_s" => {
                self.pipeline.block_duration_s = num(v)?;
                s.block_duration_s = self.pipeline.block_duration_s;
            }
            "min_participants" => self.pipeline.min_participants = num(v)?,
            "radius_m" => self.pipeline.radius_m = num(v)?,
            "min_cluster_size" => self.pipeline.min_cluster_size = num(v)?,
            "quintiles" => self.analysis.quintiles = num(v)?,
            "mw_exact_max" => self.analysis.mw_exact_max = num(v)?,
            "peer_restrict_course" => self.analysis.peer_restrict_course = boolean(v).ok_or(false)?,
            "peer_stat" => {
                self.analysis.peer_stat = match v {
                    "mean" => PeerStatistic::Mean,
                    "median" => PeerStatistic::Median,
                    _ => return Err(false),
                }
            }
            "corr_hist_bin_width" => self.analysis.corr_hist_bin_width = positive(num(v)?)?,
            "slope_hist_bin_width" => self.analysis.slope_hist_bin_width = positive(num(v)?)?,
            "n_students" => s.n_students = num(v)?,
            "n_courses" => s.n_courses = num(v)?,
            "courses_per_student" => s.courses_per_student = num(v)?,
            "weeks" => s.weeks = num(v)?,
            "campus" => s.campus = points(v).ok_or(false)?,
            "buildings" => s.buildings = points(v).ok_or(false)?,
            "fixes_per_bin" => s.fixes_per_bin = num(v)?,
            "gps_sigma" => s.gps_sigma = num(v)?,
            "accuracy_min_m" => s.accuracy_min_m = num(v)?,
            "accuracy_max_m" => s.accuracy_max_m = num(v)?,
            "bt_detect_prob" => s.bt_detect_prob = num(v)?,
            "scan_neighbors" => s.scan_neighbors = num(v)?,
            "homophily" => s.homophily = num(v)?,
            "mean_degree" => s.mean_degree = num(v)?,
            "coupling" | "ability_attendance_coupling" => s.coupling = num(v)?,
            "base_attendance" => s.base_attendance = num(v)?,
            "ability_spread" => s.ability_spread = num(v)?,
            "attendance_noise" => s.attendance_noise = num(v)?,
            "decay_low" => s.decay_low = num(v)?,
            "decay_moderate" => s.decay_moderate = num(v)?,
            "decay_high" => s.decay_high = num(v)?,
            "no_show_prob" => s.no_show_prob = num(v)?,
            "oncampus_absent_frac" => s.oncampus_absent_frac = num(v)?,
            "relocation_prob" => s.relocation_prob = num(v)?,
            "verify_min_within_50" => self.verify.min_within_50 = num(v)?,
            "verify_min_within_100" => self.verify.min_within_100 = num(v)?,
            "verify_min_within_200" => self.verify.min_within_200 = num(v)?,
            "verify_min_precision" => self.verify.min_precision = num(v)?,
            "verify_min_recall" => self.verify.min_recall = num(v)?,
            "verify_min_term_spearman" => self.verify.min_term_spearman = num(v)?,
            _ => return Err(true),
        }
        Ok(())
    }

    /// Simulator settings with the seed applied.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            seed: self.require_seed()?,
            ..self.sim.clone()
        })
    }
}

fn positive(v: f64) -> Result<f64, bool> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(false)
    }
}
