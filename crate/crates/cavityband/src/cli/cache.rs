//! Content-addressed result cache keyed by the configuration fingerprint.
//!
//! A cache entry is a directory named by the config hash, holding the output
//! files plus an `entry.json` listing their checksums and the run's
//! diagnostics. A lookup verifies every stored file and replays the requested
//! ones byte-identically into the output directory. Any inconsistency
//! (unreadable entry, missing file, checksum mismatch) is treated as a miss
//! with a warning on stderr, never an error: the run then recomputes and
//! overwrites the entry. The `entry.json` is written last, so an interrupted
//! store is an ordinary miss.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{sha256_hex, OutputRecord};
use crate::error::Result;

/// The stored description of one cached run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub config_hash: String,
    pub command: String,
    pub status: String,
    pub outputs: Vec<OutputRecord>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

/// Replays a cached run into `out_dir` if a consistent entry exists.
///
/// Every stored file is verified against its checksum; plot files are
/// delivered only when `deliver_plots` is set. Returns the entry and the
/// records of the files actually written. Corruption is reported on stderr
/// and degrades to a miss.
pub fn lookup(
    cache_dir: &Path,
    config_hash: &str,
    out_dir: &Path,
    deliver_plots: bool,
) -> Option<(CacheEntry, Vec<OutputRecord>)> {
    let entry_dir = cache_dir.join(config_hash);
    let entry_path = entry_dir.join("entry.json");
    let text = fs::read_to_string(&entry_path).ok()?;
    let entry: CacheEntry = match serde_json::from_str(&text) {
        Ok(e) => e,
        Err(err) => {
            eprintln!(
                "warning: ignoring corrupted cache entry {}: {err}",
                entry_path.display()
            );
            return None;
        }
    };
    if entry.config_hash != config_hash {
        eprintln!(
            "warning: ignoring corrupted cache entry {}: stored hash does not match its key",
            entry_path.display()
        );
        return None;
    }
    let mut contents = Vec::with_capacity(entry.outputs.len());
    for record in &entry.outputs {
        let path = entry_dir.join(&record.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(err) => {
                eprintln!(
                    "warning: ignoring corrupted cache entry {}: {}: {err}",
                    entry_path.display(),
                    record.file
                );
                return None;
            }
        };
        if sha256_hex(&bytes) != record.sha256 || bytes.len() as u64 != record.bytes {
            eprintln!(
                "warning: ignoring corrupted cache entry {}: checksum mismatch on {}",
                entry_path.display(),
                record.file
            );
            return None;
        }
        contents.push(bytes);
    }
    let mut delivered = Vec::new();
    for (record, bytes) in entry.outputs.iter().zip(&contents) {
        if !deliver_plots && record.file.ends_with(".svg") {
            continue;
        }
        if fs::write(out_dir.join(&record.file), bytes).is_err() {
            return None;
        }
        delivered.push(record.clone());
    }
    Some((entry, delivered))
}

/// Stores a completed run's artifacts under the config hash.
///
/// The artifact bytes are taken directly, so files suppressed in the output
/// directory (plots under `--no-plots`) are still cached. The `entry.json`
/// goes in last so a partially written entry never looks valid.
pub fn store(cache_dir: &Path, entry: &CacheEntry, files: &[(String, Vec<u8>)]) -> Result<()> {
    let entry_dir = cache_dir.join(&entry.config_hash);
    fs::create_dir_all(&entry_dir)?;
    for (name, bytes) in files {
        fs::write(entry_dir.join(name), bytes)?;
    }
    let text = serde_json::to_string_pretty(entry)?;
    fs::write(entry_dir.join("entry.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn record(name: &str, data: &[u8]) -> OutputRecord {
        OutputRecord {
            file: name.to_string(),
            sha256: sha256_hex(data),
            bytes: data.len() as u64,
        }
    }

    #[test]
    fn round_trip_hits_and_corruption_misses() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = tmp.path().join("cache");
        fs::create_dir_all(&cache).unwrap();

        let csv: &[u8] = b"q,branch\n0,lower\n";
        let svg: &[u8] = b"<svg/>\n";
        let entry = CacheEntry {
            config_hash: "deadbeef".to_string(),
            command: "band".to_string(),
            status: "ok".to_string(),
            outputs: vec![record("band.csv", csv), record("band.svg", svg)],
            diagnostics: BTreeMap::new(),
        };
        store(
            &cache,
            &entry,
            &[
                ("band.csv".to_string(), csv.to_vec()),
                ("band.svg".to_string(), svg.to_vec()),
            ],
        )
        .unwrap();

        let replay = tmp.path().join("replay");
        fs::create_dir_all(&replay).unwrap();
        let (hit, delivered) = lookup(&cache, "deadbeef", &replay, false).unwrap();
        assert_eq!(hit.outputs.len(), 2);
        assert_eq!(delivered.len(), 1);
        assert_eq!(fs::read(replay.join("band.csv")).unwrap(), csv);
        assert!(!replay.join("band.svg").exists());

        let (_, with_plots) = lookup(&cache, "deadbeef", &replay, true).unwrap();
        assert_eq!(with_plots.len(), 2);
        assert!(replay.join("band.svg").exists());

        assert!(lookup(&cache, "0000beef", &replay, true).is_none());

        fs::write(cache.join("deadbeef").join("band.csv"), b"tampered").unwrap();
        assert!(lookup(&cache, "deadbeef", &replay, true).is_none());
    }
}
