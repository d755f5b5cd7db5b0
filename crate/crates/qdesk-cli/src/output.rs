use crate::error::CliResult;
use serde_json::{Map, Value};
use std::path::Path;

/// A named CSV table; every row has one cell per header column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> CliResult<String> {
        let file = format!("{}.csv", self.name);
        let mut w = csv::Writer::from_path(dir.join(&file))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(file)
    }
}

/// Result of one experiment: tables for plotting plus a summary of scalar results.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
}

impl Outcome {
    pub fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.into(), v.into());
    }

    /// Non-finite numbers become null so the manifest stays valid JSON.
    pub fn put_f(&mut self, key: &str, x: f64) {
        self.summary.insert(key.into(), num(x));
    }
}

pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Shortest round-trip representation; scientific outside [1e-4, 1e7).
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e7).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
