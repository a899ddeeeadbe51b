//! Analysis reports: a structured `report.json` and a flat `report.csv` with
//! one row per (subject, paradigm, selection, analysis, metric).
//!
//! The CSV starts with a single `# generated_at=...` comment line; everything
//! after it is a deterministic function of the records, so two runs with the
//! same inputs differ only in that first line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CSV_HEADER: [&str; 6] = ["subject", "paradigm", "selection", "analysis", "metric", "value"];
const TIMESTAMP_PREFIX: &str = "# generated_at=";

/// Result of one task. `detail` carries the full analysis output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub subject: String,
    pub paradigm: String,
    pub selection: String,
    pub analysis: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRecord {
    pub fn new(subject: &str, paradigm: &str, selection: &str, analysis: &str) -> Self {
        Self {
            subject: subject.into(),
            paradigm: paradigm.into(),
            selection: selection.into(),
            analysis: analysis.into(),
            metrics: BTreeMap::new(),
            detail: serde_json::Value::Null,
            error: None,
        }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn with_detail<T: Serialize>(mut self, detail: &T) -> Self {
        self.detail = serde_json::to_value(detail).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn failed(mut self, message: impl Into<String>) -> Self {
        self.error = Some(message.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub generated_at: String,
    pub records: Vec<ReportRecord>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// Flat rows in record order, metrics in name order. Failed records
    /// contribute no rows.
    pub fn rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .filter(|r| r.error.is_none())
            .flat_map(|r| {
                r.metrics.iter().map(move |(metric, &value)| CsvRow {
                    subject: r.subject.clone(),
                    paradigm: r.paradigm.clone(),
                    selection: r.selection.clone(),
                    analysis: r.analysis.clone(),
                    metric: metric.clone(),
                    value,
                })
            })
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::parse(REPORT_JSON, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv_rows(path, &self.generated_at, &self.rows())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub subject: String,
    pub paradigm: String,
    pub selection: String,
    pub analysis: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_csv_rows(path: &Path, generated_at: &str, rows: &[CsvRow]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{TIMESTAMP_PREFIX}{generated_at}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(CSV_HEADER).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a report CSV, skipping `#` comment lines.
pub fn read_csv_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let what = path.display().to_string();
    let header = reader.headers().map_err(|e| Error::parse(&what, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::parse(
            &what,
            format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| Error::parse(&what, e))
}

/// Concatenates report CSVs in argument order. A later row with the same
/// (subject, paradigm, selection, analysis, metric) key replaces the earlier
/// one in place.
pub fn merge_csv(inputs: &[&Path], output: &Path, generated_at: &str) -> Result<usize> {
    let mut rows: Vec<CsvRow> = Vec::new();
    let mut position: BTreeMap<[String; 5], usize> = BTreeMap::new();
    for path in inputs {
        for row in read_csv_rows(path)? {
            let key = [
                row.subject.clone(),
                row.paradigm.clone(),
                row.selection.clone(),
                row.analysis.clone(),
                row.metric.clone(),
            ];
            match position.get(&key) {
                Some(&i) => rows[i] = row,
                None => {
                    position.insert(key, rows.len());
                    rows.push(row);
                }
            }
        }
    }
    write_csv_rows(output, generated_at, &rows)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        Report {
            generated_at: "2024-01-01T00:00:00Z".into(),
            records: vec![
                ReportRecord::new("s1", "sentence", "IFG", "decoding")
                    .metric("accuracy", 0.625)
                    .metric("p_value", 0.001),
                ReportRecord::new("s1", "picture", "IFG", "decoding").failed("single class"),
                ReportRecord::new("s2", "sentence", "stable", "rsa").metric("rho_abstract", -0.125),
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REPORT_CSV);
        report().write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# generated_at=2024-01-01T00:00:00Z");
        assert_eq!(lines[1], "subject,paradigm,selection,analysis,metric,value");
        assert_eq!(lines[2], "s1,sentence,IFG,decoding,accuracy,0.625");
        assert_eq!(lines.len(), 5);
        assert_eq!(read_csv_rows(&path).unwrap(), report().rows());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REPORT_JSON);
        let r = report();
        r.write_json(&path).unwrap();
        let back: Report = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.failures(), 1);
    }

    #[test]
    fn merge_replaces_duplicate_keys() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        report().write_csv(&a).unwrap();
        let mut second = report();
        second.records = vec![ReportRecord::new("s1", "sentence", "IFG", "decoding").metric("accuracy", 0.75)];
        second.write_csv(&b).unwrap();
        let out = dir.path().join("merged.csv");
        assert_eq!(merge_csv(&[&a, &b], &out, "now").unwrap(), 3);
        let rows = read_csv_rows(&out).unwrap();
        assert_eq!(rows[0].value, 0.75);
        assert!(read_csv_rows(&dir.path().join("missing.csv")).is_err());
    }
}
