//! Run manifests: what was computed, from which configuration, into which
//! files.
//!
//! Every run writes exactly one `manifest.json` beside its outputs. The
//! manifest records the tool version, a SHA-256 fingerprint of the
//! computation-relevant configuration, creation timestamps, a checksum and
//! size per output file, whether the results were served from the cache, and
//! command-specific convergence diagnostics. Identical configurations yield
//! identical output checksums; the timestamps live only here, never in the
//! data files.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Checksum and size of one emitted file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    /// File name relative to the output directory.
    pub file: String,
    /// SHA-256 of the file contents, lowercase hex.
    pub sha256: String,
    /// File size in bytes.
    pub bytes: u64,
}

/// The `manifest.json` document written beside every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 over the canonical JSON of the computation-relevant
    /// configuration; delivery knobs (output directory, worker count, plot
    /// suppression, cache location) are excluded.
    pub config_hash: String,
    pub created_unix: u64,
    pub created_utc: String,
    /// Worker threads the run was allowed to use; 0 means all cores.
    pub workers: usize,
    /// Whether the outputs were replayed byte-identically from the cache.
    pub cached: bool,
    /// `"ok"` for a completed computation, `"no result"` when the run
    /// finished without error but found nothing to report.
    pub status: String,
    pub outputs: Vec<OutputRecord>,
    /// Command-specific convergence and size diagnostics, sorted by key.
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Current wall-clock time as seconds since the Unix epoch.
pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Formats an epoch second count as `YYYY-MM-DDThh:mm:ssZ`.
pub fn utc_string(unix: u64) -> String {
    let secs_of_day = unix % 86_400;
    let days = (unix / 86_400) as i64;
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        secs_of_day / 3600,
        (secs_of_day / 60) % 60,
        secs_of_day % 60
    )
}

/// Gregorian date for a day count since 1970-01-01.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}
