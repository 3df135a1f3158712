//! Deterministic output files: every float is written at 12 significant
//! digits, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use matched_illum::io::{fmt_num, round_sig};
use serde::Serialize;
use serde_json::{Number, Value};

use crate::Failure;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        std::fs::write(self.path(name), to_json(value)?)?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), Failure> {
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub enum Cell {
    Text(String),
    Num(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => fmt_num(*x),
        }
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

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Text(x.to_string())
    }
}

pub fn to_json(value: &impl Serialize) -> Result<String, Failure> {
    let v = round_value(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            // -0 and 0 print differently
            let x = if x == 0.0 { 0.0 } else { x };
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect())
        }
        other => other,
    }
}
