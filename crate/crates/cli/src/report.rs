//! Output records: JSON reports and CSV tables, written atomically.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    /// `null` when the check could not be evaluated.
    pub value: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Check {
            name: name.to_string(),
            value: Some(value),
            tolerance,
            pass: value <= tolerance,
            detail,
        }
    }

    pub fn failed(name: &str, tolerance: f64, detail: String) -> Self {
        Check {
            name: name.to_string(),
            value: None,
            tolerance,
            pass: false,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// One emitted file: metadata, checks, scalar results and one main table.
pub struct Report {
    pub meta: Value,
    pub checks: Vec<Check>,
    pub results: Map<String, Value>,
    pub table_name: &'static str,
    pub table: Table,
}

/// `SOURCE_DATE_EPOCH` pins the timestamp for reproducible files.
fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|t| DateTime::<Utc>::from_timestamp(t, 0))
        .unwrap_or_else(Utc::now);
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn meta(cfg: &RunConfig, extra: Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("artifact".into(), json!("opticalvn"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("timestamp".into(), json!(timestamp()));
    m.insert("rng".into(), json!(opticalvn::montecarlo::RNG_NAME));
    m.insert(
        "config".into(),
        serde_json::to_value(cfg).expect("config serializes"),
    );
    m.extend(extra);
    Value::Object(m)
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut results = self.results.clone();
                results.insert(
                    self.table_name.into(),
                    serde_json::to_value(&self.table).expect("table serializes"),
                );
                let doc = json!({ "meta": self.meta, "checks": self.checks, "results": results });
                let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Csv => {
                let mut s = String::new();
                s.push_str(&format!("# meta {}\n", self.meta));
                for c in &self.checks {
                    s.push_str(&format!(
                        "# check {}\n",
                        serde_json::to_string(c).expect("check serializes")
                    ));
                }
                for (k, v) in &self.results {
                    s.push_str(&format!("# result {k} {v}\n"));
                }
                s.push_str(&self.table.columns.join(","));
                s.push('\n');
                for row in &self.table.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    s.push_str(&cells.join(","));
                    s.push('\n');
                }
                s
            }
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Failure(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_cells() {
        assert_eq!(Cell::Num(0.1).csv(), "0.1");
        assert_eq!(Cell::Num(1.5e-20).csv(), "1.5e-20");
        assert_eq!(Cell::Num(-2.0).csv(), "-2");
        assert_eq!(Cell::Empty.csv(), "");
        assert_eq!(Cell::from("a,b").csv(), "\"a,b\"");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
