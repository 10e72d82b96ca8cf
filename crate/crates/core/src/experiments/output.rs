//! CSV tables with comment headers, and `verdict.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl CsvTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        CsvTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Parsed values of a numeric column.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column(name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }
}

/// Formats a float for CSV output (shortest round-trip form).
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, relation: "<=".into(), bound, pass: value <= bound }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, relation: ">=".into(), bound, pass: value >= bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub trials: usize,
    pub limit_samples: Option<usize>,
    pub scheme: String,
}

impl Seeds {
    pub fn new(master: u64, trials: usize, limit_samples: Option<usize>) -> Self {
        Seeds {
            master,
            trials,
            limit_samples,
            scheme: "trial i: splitmix64(master + (i+1)*0x9e3779b97f4a7c15); limit draws use master' = split(master, LIMIT_STREAM)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub experiment: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub statistics: BTreeMap<String, serde_json::Value>,
    pub thresholds: BTreeMap<String, f64>,
    pub seeds: Seeds,
    pub warnings: Vec<String>,
}

impl Verdict {
    pub fn new(experiment: &str, seeds: Seeds) -> Self {
        Verdict {
            experiment: experiment.into(),
            pass: true,
            checks: Vec::new(),
            statistics: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            seeds,
            warnings: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.thresholds.insert(c.name.clone(), c.bound);
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn stat<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.statistics.insert(key.into(), v);
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Numeric statistic by key.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.statistics.get(key).and_then(|v| v.as_f64())
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub config_json: String,
    pub tables: Vec<CsvTable>,
    pub verdict: Option<Verdict>,
    pub json: Option<serde_json::Value>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// `true` unless a verdict exists and failed.
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_none_or(|v| v.pass)
    }

    /// Writes all tables, `verdict.json` and any JSON payload to `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = dir.join(t.file_name());
            write_table(&path, t, &self.experiment, &self.config_json, &self.warnings)?;
            written.push(path);
        }
        if let Some(v) = &self.verdict {
            let path = dir.join("verdict.json");
            let s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
            fs::write(&path, s + "\n")?;
            written.push(path);
        }
        if let Some(j) = &self.json {
            let path = dir.join(format!("{}.json", self.experiment));
            let s = serde_json::to_string_pretty(j).map_err(|e| Error::Io(e.to_string()))?;
            fs::write(&path, s + "\n")?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_table(path: &Path, t: &CsvTable, experiment: &str, config: &str, warnings: &[String]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "# attnlab {VERSION}")?;
    writeln!(f, "# experiment: {experiment}")?;
    writeln!(f, "# config: {config}")?;
    for n in &t.notes {
        writeln!(f, "# note: {n}")?;
    }
    for w in warnings {
        writeln!(f, "# warning: {w}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(&t.columns).map_err(|e| Error::Io(e.to_string()))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`Report::write`], skipping `#` comment lines.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    let header = r.headers().map_err(|e| Error::Io(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| Error::Io(e.to_string()))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
