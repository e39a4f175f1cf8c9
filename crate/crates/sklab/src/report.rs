//! Report schema and deterministic emission.
//!
//! A report carries the config echo, a provenance block, per-check results
//! and the sweep tables behind them. Serialization is stable: re-emitting
//! an unchanged report is byte-identical, and `parse(emit(report))` is the
//! identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Build metadata; deliberately free of wall-clock timestamps so reruns are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    /// "exact" when the outer densities are closed-form, otherwise
    /// "comparability-proxy".
    pub grade: String,
}

/// One named check: recorded scalars plus a pass flag derived only from
/// those numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub values: BTreeMap<String, f64>,
    pub pass: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            values: BTreeMap::new(),
            pass: true,
            notes: Vec::new(),
        }
    }

    /// Records a scalar; infinities are clamped to the largest finite value
    /// so the report stays JSON-representable.
    pub fn value(mut self, key: impl Into<String>, v: f64) -> Self {
        let v = if v.is_nan() {
            f64::MAX
        } else {
            v.clamp(f64::MIN, f64::MAX)
        };
        self.values.insert(key.into(), v);
        self
    }

    pub fn passing(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// A numeric table backing one or more checks; emitted as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub checks: Vec<CheckResult>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// The full report as structured text (pretty JSON).
    StructuredText,
    /// One CSV per table plus a flat check summary.
    Csv,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Writes the report in the requested format under `dir`; returns the
/// emitted paths in a deterministic order.
pub fn emit_report(report: &Report, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::StructuredText => {
            let path = dir.join("report.json");
            fs::write(&path, report.to_json()? + "\n")?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let summary = dir.join("checks.csv");
            let mut w = csv::Writer::from_path(&summary).map_err(csv_err)?;
            w.write_record(["check", "key", "value", "pass"])
                .map_err(csv_err)?;
            for c in &report.checks {
                for (k, v) in &c.values {
                    w.write_record([
                        c.name.as_str(),
                        k.as_str(),
                        &format_float(*v),
                        if c.pass { "true" } else { "false" },
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.flush()?;
            written.push(summary);
            for t in &report.tables {
                let path = dir.join(format!("{}.csv", t.name));
                let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
                w.write_record(&t.columns).map_err(csv_err)?;
                for row in &t.rows {
                    let rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
                    w.write_record(&rec).map_err(csv_err)?;
                }
                w.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(e.to_string())
}

/// Shortest round-trip float formatting (the same representation the JSON
/// emitter uses), so CSV re-emission is byte-stable.
fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float path gives the shortest representation that
    // round-trips; reuse it through Value to avoid a second formatter.
    serde_json::to_string(&v).unwrap_or_else(|_| format!("{v}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> Report {
        let config = ExperimentConfig::from_toml(
            r#"
seed = 3
[phi]
kind = "stable"
alpha = 0.6
[psi]
kind = "stable"
alpha = 0.7
[domain]
shape = "disk"
radius = 1.0
[experiment]
kind = "exponent-inspect"
"#,
        )
        .unwrap();
        Report {
            config,
            provenance: Provenance {
                artifact: "sklab".into(),
                version: "0.1.0".into(),
                seed: 3,
                workers: 0,
                grade: "exact".into(),
            },
            checks: vec![
                CheckResult::new("alpha-recovery")
                    .value("fitted", 0.6000000000000232)
                    .value("target", 0.6),
                CheckResult::new("cap").value("fitted_c", 3.7).passing(true),
            ],
            tables: vec![Table {
                name: "sweep".into(),
                columns: vec!["delta_x".into(), "measured".into(), "predicted".into(), "ratio".into()],
                rows: vec![vec![0.1, 1.25, 1.0, 1.25], vec![0.01, 0.5, 0.4, 1.25]],
            }],
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let r = sample_report();
        let text = r.to_json().unwrap();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn emission_is_deterministic() {
        let r = sample_report();
        let dir = std::env::temp_dir().join(format!("sklab-report-test-{}", std::process::id()));
        let p1 = emit_report(&r, ReportFormat::StructuredText, &dir).unwrap();
        let first = fs::read(&p1[0]).unwrap();
        let p2 = emit_report(&r, ReportFormat::StructuredText, &dir).unwrap();
        let second = fs::read(&p2[0]).unwrap();
        assert_eq!(first, second);

        let c1 = emit_report(&r, ReportFormat::Csv, &dir).unwrap();
        let bytes1: Vec<Vec<u8>> = c1.iter().map(|p| fs::read(p).unwrap()).collect();
        let c2 = emit_report(&r, ReportFormat::Csv, &dir).unwrap();
        let bytes2: Vec<Vec<u8>> = c2.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(bytes1, bytes2);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_row_count_matches_table() {
        let r = sample_report();
        let dir = std::env::temp_dir().join(format!("sklab-report-rows-{}", std::process::id()));
        let paths = emit_report(&r, ReportFormat::Csv, &dir).unwrap();
        let sweep = paths.iter().find(|p| p.ends_with("sweep.csv")).unwrap();
        let text = fs::read_to_string(sweep).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + r.tables[0].rows.len());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_check_list_is_valid() {
        let mut r = sample_report();
        r.checks.clear();
        r.tables.clear();
        assert!(r.all_pass());
        let text = r.to_json().unwrap();
        let back = Report::from_json(&text).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn infinities_are_clamped_to_finite() {
        let c = CheckResult::new("x").value("v", f64::INFINITY);
        assert!(c.values["v"].is_finite());
    }
}
