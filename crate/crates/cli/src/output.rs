//! Artifact output: atomic file writes, sorted-key JSON summaries, RFC-4180
//! CSV encodings, and config hashing.
//!
//! Every artifact is written to a temporary file in the destination
//! directory and renamed into place, so concurrent experiments never observe
//! half-written files. JSON summaries serialize through `serde_json::Value`,
//! whose map keeps keys in sorted order; floating-point fields use the
//! shortest round-trip representation, so equal bits serialize to equal text.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use ergodiff_core::DecayReport;

/// One verdict line of a run summary.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Named numeric results backing the verdict (bitwise reproducible).
    pub numbers: BTreeMap<String, f64>,
}

/// Machine-readable summary of one subcommand invocation.
///
/// Re-running with an identical config (and seed) reproduces every numeric
/// field bitwise except `wall_clock_seconds`, which records timing only.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: String,
    /// SHA-256 of the canonical serialized config, after CLI overrides.
    pub config_hash: String,
    /// Seeds that influenced the run (empty for deterministic backends).
    pub seeds: Vec<u64>,
    pub verdicts: Vec<Verdict>,
    /// Tolerance budgets the verdicts were judged against.
    pub tolerance_budgets: BTreeMap<String, f64>,
    /// Paths of the artifacts written, relative to the output directory.
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// SHA-256 hex digest of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    let digest = h.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Serializes to pretty JSON with sorted keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> io::Result<String> {
    let v = serde_json::to_value(value).map_err(io::Error::other)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(io::Error::other)?;
    s.push('\n');
    Ok(s)
}

/// Writes bytes to `dir/name` atomically (temp file + rename).
pub fn atomic_write(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// RFC-4180 CSV encoding of a decay report: one row per `(delta, k)` pair
/// with the offending fraction, ending with CRLF line breaks.
pub fn decay_csv(report: &DecayReport) -> String {
    let mut out = String::from("delta,k,offending_fraction\r\n");
    for (d, &delta) in report.deltas.iter().enumerate() {
        for (i, &k) in report.ks.iter().enumerate() {
            out.push_str(&format!("{delta},{k},{}\r\n", report.fraction(d, i)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_hex() {
        let h = config_hash("[system]\nkind = \"doubling\"\n");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash("[system]\nkind = \"doubling\"\n"));
        assert_ne!(h, config_hash("[system]\nkind = \"shift\"\n"));
    }

    #[test]
    fn json_keys_come_out_sorted() {
        let summary = RunSummary {
            command: "run-tsd".into(),
            config_hash: "00".into(),
            seeds: vec![7],
            verdicts: vec![Verdict {
                name: "zeta".into(),
                pass: true,
                detail: "ok".into(),
                numbers: BTreeMap::from([("gap".to_string(), 0.125)]),
            }],
            tolerance_budgets: BTreeMap::new(),
            artifacts: vec![],
            wall_clock_seconds: 1.0,
        };
        let text = to_sorted_json(&summary).unwrap();
        let artifacts = text.find("\"artifacts\"").unwrap();
        let command = text.find("\"command\"").unwrap();
        let wall = text.find("\"wall_clock_seconds\"").unwrap();
        assert!(artifacts < command && command < wall);
        assert!(text.ends_with('\n'));
        // 0.125 is dyadic: the shortest round-trip representation is exact.
        assert!(text.contains("0.125"));
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = atomic_write(dir.path(), "x.csv", b"a,b\r\n").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"a,b\r\n");
        atomic_write(dir.path(), "x.csv", b"c,d\r\n").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"c,d\r\n");
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["x.csv".to_string()]);
    }
}
