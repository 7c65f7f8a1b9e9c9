//! Tabular experiment output and its CSV/JSON serialization.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One table cell. Non-finite floats are stored as [`Cell::Empty`] so the
/// JSON form stays valid and round-trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Cell::Float(v)
        } else {
            Cell::Empty
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::from)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        // seeds above i64::MAX keep their exact digits as text
        i64::try_from(v).map_or_else(|_| Cell::Text(v.to_string()), Cell::Int)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of `column` for rows where `filter` holds; missing
    /// cells come back as NaN so rows stay aligned across columns.
    pub fn numbers_where(&self, column: &str, filter: impl Fn(&[Cell]) -> bool) -> Vec<f64> {
        let Some(c) = self.column_index(column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| filter(r))
            .map(|r| r[c].as_f64().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn numbers(&self, column: &str) -> Vec<f64> {
        self.numbers_where(column, |_| true)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| Error::io(path, e.into()))?;
        let fail = |e: csv::Error| Error::io(path, e.into());
        w.write_record(&self.columns).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// A named summary statistic; `value` is `None` when undefined (e.g. a
/// correlation over a constant column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub group: String,
    pub parameter: String,
    pub statistic: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    Lines,
    Scatter,
    /// Each series is one box; only its `y` values are used.
    Boxes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            x,
            y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    pub name: String,
    pub kind: FigureKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Figure {
    pub fn is_empty(&self) -> bool {
        self.series
            .iter()
            .all(|s| s.y.iter().all(|v| !v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    /// The full configuration the report was produced from.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub tables: Vec<Table>,
    pub summary: Vec<Stat>,
    pub figures: Vec<Figure>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// File names written next to the JSON document.
    #[serde(default)]
    pub artifacts: Vec<String>,
}

/// First 16 hex digits of the SHA-256 of the compact JSON encoding.
pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

impl Report {
    pub fn new<C: Serialize>(experiment: &str, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::config(format!("config does not serialize: {e}")))?;
        Ok(Self {
            experiment: experiment.to_owned(),
            config_hash: config_hash(&config),
            config,
            tables: Vec::new(),
            summary: Vec::new(),
            figures: Vec::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn stat(&self, group: &str, parameter: &str, statistic: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.group == group && s.parameter == parameter && s.statistic == statistic)
            .and_then(|s| s.value)
    }

    pub(crate) fn push_stat(
        &mut self,
        group: &str,
        parameter: &str,
        statistic: &str,
        value: Option<f64>,
    ) {
        self.summary.push(Stat {
            group: group.to_owned(),
            parameter: parameter.to_owned(),
            statistic: statistic.to_owned(),
            value: value.filter(|v| v.is_finite()),
        });
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("summary", &["group", "parameter", "statistic", "value"]);
        for s in &self.summary {
            t.push(vec![
                s.group.as_str().into(),
                s.parameter.as_str().into(),
                s.statistic.as_str().into(),
                s.value.into(),
            ]);
        }
        t
    }

    fn file_stem(&self, part: &str) -> String {
        format!("{}_{part}", self.experiment)
    }
}

/// Writes `<experiment>.json`, one CSV per table plus the summary, and one
/// SVG per non-empty figure into `dir`. Returns the paths written.
pub fn write_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut report = report.clone();
    let mut written = Vec::new();

    let mut tables: Vec<Table> = report.tables.clone();
    tables.push(report.summary_table());
    let mut names = Vec::new();
    for t in &tables {
        let name = format!("{}.csv", report.file_stem(&t.name));
        let path = dir.join(&name);
        t.write_csv(&path)?;
        written.push(path);
        names.push(name);
    }

    let plots = super::plot::emit_plots(&report, dir)?;
    for w in &plots.skipped {
        report.warnings.push(w.clone());
    }
    for p in &plots.written {
        names.push(
            p.file_name()
                .expect("plot paths have file names")
                .to_string_lossy()
                .into_owned(),
        );
    }
    written.extend(plots.written);

    report.artifacts = names;
    let json_path = dir.join(format!("{}.json", report.experiment));
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::config(format!("report does not serialize: {e}")))?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    written.push(json_path);
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_round_trip_through_json() {
        let row = vec![
            Cell::Int(3),
            Cell::Float(0.1),
            Cell::from(f64::NAN),
            "x".into(),
            Cell::from(u64::MAX),
        ];
        let text = serde_json::to_string(&row).unwrap();
        let back: Vec<Cell> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, row);
        assert_eq!(row[2], Cell::Empty);
        assert_eq!(row[4], Cell::Text(u64::MAX.to_string()));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = serde_json::json!({"b": 1, "a": [1.5, 2]});
        let b = serde_json::json!({"a": [1.5, 2], "b": 1});
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 16);
        assert_ne!(
            config_hash(&a),
            config_hash(&serde_json::json!({"b": 2, "a": [1.5, 2]}))
        );
    }

    #[test]
    fn csv_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![Cell::Float(0.1), Cell::Text("x,y".into())]);
        t.push(vec![Cell::Empty, Cell::Int(-2)]);
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n0.1,\"x,y\"\n,-2\n");
        assert_eq!(t.numbers("b")[1], -2.0);
        assert!(t.numbers("a")[1].is_nan());
        assert!(t.numbers("zz").is_empty());
    }
}
