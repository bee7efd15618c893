//! CSV tables and run manifests.

use crate::{Cli, CliError, VERSION};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use tmyag_core::MaterialConstants;

/// Shortest round-trip float in exponent form; stable across runs and
/// readable for values spanning 1e-26 to 1e14.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// A header plus string rows, written as RFC 4180 CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::compute("IoError", e.to_string()))
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Provenance record emitted next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every flag after defaults were applied.
    pub flags: serde_json::Value,
    pub constants_hash: String,
    pub version: String,
    pub timestamp_unix_s: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, cli: &Cli, consts: &MaterialConstants) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            flags: serde_json::to_value(cli).unwrap_or(serde_json::Value::Null),
            constants_hash: consts.hash(),
            version: VERSION.to_string(),
            timestamp_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the table to `out` (or stdout) and the manifest beside it (or to stderr).
pub fn emit(table: &Table, out: Option<&Path>, manifest: &RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            table.write_to(path)?;
            std::fs::write(manifest_path(path), manifest.to_json())?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(&table.to_csv()?)?;
            lock.flush()?;
            eprintln!("{}", manifest.to_json());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let mut t = Table::new(&["B_T", "shift_Hz"]);
        t.push(vec![fmt_f64(3.0), fmt_f64(3.88e10)]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "B_T,shift_Hz\n3e0,3.88e10\n");
    }

    #[test]
    fn float_format_round_trips() {
        for x in [1.2514403944873736e-26, 0.1 + 0.2, -4.2e9, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(manifest_path(Path::new("/tmp/a.csv")), PathBuf::from("/tmp/a.csv.manifest.json"));
    }
}
