//! In-memory results and their CSV/TOML form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::error::{Error, Result};
use crate::macroscopic::Trajectory;

/// One CSV cell. Numbers are written in shortest round-trip form, so
/// reading a file back gives the stored `f64` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

pub fn format_f64(v: f64) -> String {
    // Display for f64 is the shortest string that parses back exactly
    if v.is_nan() {
        "NaN".into()
    } else {
        v.to_string()
    }
}

/// A named CSV, `name` being its path below the output root without the
/// extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn from_trajectory(name: impl Into<String>, traj: &Trajectory) -> Self {
        let mut t = Self::new(name, traj.header());
        for k in 0..traj.len() {
            t.push(traj.row(k).into_iter().map(Cell::Num).collect());
        }
        t
    }

    pub fn column_index(&self, col: &str) -> Option<usize> {
        self.header.iter().position(|h| h == col)
    }

    /// Numeric column by name; text cells read as NaN.
    pub fn column(&self, col: &str) -> Option<Vec<f64>> {
        let i = self.column_index(col)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Num(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn text_column(&self, col: &str) -> Option<Vec<String>> {
        let i = self.column_index(col)?;
        Some(self.rows.iter().map(|r| r[i].render()).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header)
            .map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Cells that
    /// parse as numbers become [`Cell::Num`].
    pub fn read_csv(name: impl Into<String>, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let mut t = Self::new(name, header);
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            t.rows.push(
                rec.iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map(Cell::Num)
                            .unwrap_or_else(|_| Cell::Text(s.into()))
                    })
                    .collect(),
            );
        }
        Ok(t)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

/// Outcome of one scenario.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: ExperimentSpec,
    pub tables: Vec<Table>,
    /// Scalar summaries keyed by `<case>/<quantity>` or `<quantity>`.
    pub metrics: BTreeMap<String, f64>,
    /// Human-readable flags, e.g. runs that never converged.
    pub notes: Vec<String>,
}

impl RunResult {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            spec: spec.clone(),
            tables: Vec::new(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    /// Writes every table as `<root>/<name>.csv` plus
    /// `<root>/<scenario>/manifest.toml`, returning the manifest path.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        for t in &self.tables {
            t.write_csv(&root.join(format!("{}.csv", t.name)))?;
        }
        let manifest = Manifest {
            run: RunInfo {
                scenario: self.spec.scenario.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seeds: self.spec.seeds.clone(),
                files: self
                    .tables
                    .iter()
                    .map(|t| format!("{}.csv", t.name))
                    .collect(),
                notes: self.notes.clone(),
            },
            metrics: self.metrics.clone(),
            spec: self.spec.clone(),
        };
        let path = root.join(self.spec.scenario.as_str()).join("manifest.toml");
        let dir = path.parent().expect("manifest has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Contents of `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub run: RunInfo,
    pub metrics: BTreeMap<String, f64>,
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub scenario: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        m.spec.validate()?;
        Ok(m)
    }
}
