use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything needed to replay a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub subcommand: String,
    /// Parsed flags, including defaults.
    pub flags: serde_json::Value,
    pub argv: Vec<String>,
    pub seed: u64,
    pub system_file: String,
    /// SHA-256 of the canonical JSON form of the parsed system.
    pub config_hash: String,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub events: u64,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or(Duration::ZERO)
        .as_secs_f64()
}

/// `dir/stem.<suffix>` next to the primary output.
pub fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    primary.with_file_name(format!("{stem}.{suffix}"))
}
