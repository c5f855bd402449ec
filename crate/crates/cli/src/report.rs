//! Report bundle and its on-disk formats.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Bumped whenever a CSV column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Svg];
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Serialize(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Serialize(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone)]
pub struct JobReport {
    pub name: String,
    pub kind: &'static str,
    pub seed: u64,
    pub table: Table,
    pub result: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub svg: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub config_hash: String,
    pub seed: u64,
    pub jobs: Vec<JobReport>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.jobs.iter().all(|j| j.verdicts.iter().all(|v| v.passed))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let jobs: Vec<_> = self
            .jobs
            .iter()
            .map(|j| {
                serde_json::json!({
                    "name": j.name,
                    "kind": j.kind,
                    "seed": j.seed,
                    "passed": j.verdicts.iter().all(|v| v.passed),
                    "verdicts": j.verdicts,
                    "result": j.result,
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": JSON_SCHEMA_VERSION,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "versions": { "specbayes": specbayes::VERSION, "specbayes-cli": env!("CARGO_PKG_VERSION") },
            "passed": self.passed(),
            "jobs": jobs,
        })
    }

    /// Writes the requested formats into `dir`; returns the written paths.
    pub fn emit(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        if formats.contains(&Format::Csv) {
            for j in &self.jobs {
                let p = dir.join(format!("{}.csv", j.name));
                write_atomic(&p, &j.table.to_csv()?)?;
                written.push(p);
            }
        }
        if formats.contains(&Format::Svg) {
            for j in &self.jobs {
                if let Some(svg) = &j.svg {
                    let p = dir.join(format!("{}.svg", j.name));
                    write_atomic(&p, svg.as_bytes())?;
                    written.push(p);
                }
            }
        }
        if formats.contains(&Format::Json) {
            let p = dir.join("summary.json");
            write_atomic(&p, &pretty(&self.summary_json())?)?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn pretty(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Serialize(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.5e-300, 1.0 / 3.0, 2.0, 1e22] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(2.0), "2.0");
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
