//! Per-directory run manifest: what went in, what came out, and digests of both.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{write_text, IoError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Identifies a simulated dataset; carried forward by downstream stages.
    pub run_id: Option<String>,
    pub source_run_id: Option<String>,
    pub config: serde_json::Value,
    /// File name to sha256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "attend".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: None,
            run_id: None,
            source_run_id: None,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of the named files that exist in `dir`, keyed by `prefix` + name.
pub fn digest_files(dir: &Path, names: &[&str], prefix: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    for name in names {
        let path = dir.join(name);
        if path.is_file() {
            out.insert(format!("{prefix}{name}"), sha256_file(&path)?);
        }
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_text(dir, MANIFEST, &text)
}

/// `None` when the directory has no manifest.
pub fn read_manifest(dir: &Path) -> Result<Option<RunManifest>, IoError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| IoError::Invalid(MANIFEST.into(), e.to_string()))
}
