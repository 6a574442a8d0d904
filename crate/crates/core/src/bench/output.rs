//! Artifact writers: CSV tables with a units line, the JSON manifest and the
//! plain-text summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// `cols` are (name, unit) pairs; use "1" for dimensionless.
    pub fn new(cols: &[(&str, &str)]) -> Self {
        Table {
            columns: cols.iter().map(|c| c.0.to_string()).collect(),
            units: cols.iter().map(|c| c.1.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# units: {}", self.units.join(","))?;
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format_value(*x))).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

/// Read back a table written by [`Table::write`].
pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let units_line = lines.next().unwrap_or("");
    let units = units_line
        .strip_prefix("# units: ")
        .ok_or_else(|| Error::validation(format!("{} lacks a units line", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let header = lines.next().ok_or_else(|| Error::validation("missing header row"))?;
    let columns = header.split(',').map(str::to_string).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| Error::validation(format!("bad number '{v}'"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Table { columns, units, rows })
}

/// Collects a scenario's files, manifest entries and summary lines.
#[derive(Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub results: serde_json::Map<String, Value>,
    pub summary: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: vec![], results: serde_json::Map::new(), summary: vec![] })
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn result(&mut self, key: &str, v: impl Into<Value>) {
        self.results.insert(key.to_string(), v.into());
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }
}

/// JSON numbers cannot hold inf/nan; store those as strings.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(format_value(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_units() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&[("omega", "GHz"), ("weight", "1")]);
        t.push(vec![7.5, 0.25]);
        t.push(vec![1e-7, f64::INFINITY]);
        let p = dir.path().join("t.csv");
        t.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# units: GHz,1\nomega,weight\n"));
        let back = read_table(&p).unwrap();
        assert_eq!(back, t);
    }
}
