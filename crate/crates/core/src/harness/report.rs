use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "dvaudit-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Bool(bool),
    Text(String),
    Missing(Option<()>),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
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
            Cell::Num(v) => format!("{v:.4}"),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing(_) => "-".into(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Missing(_) => String::new(),
            other => other.render(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Cell::Missing(None))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub sub_run: String,
    pub seed: u64,
    /// Checkpoint hash of the model the row was measured on; empty when no model is involved.
    pub model_hash: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of `column` across rows.
    pub fn values(&self, column: &str) -> Vec<&Cell> {
        match self.column(column) {
            Some(k) => self.rows.iter().map(|r| &r.cells[k]).collect(),
            None => Vec::new(),
        }
    }

    /// First row whose `key` columns hold the given text values.
    pub fn find(&self, key: &[(&str, &str)]) -> Option<&Row> {
        self.rows.iter().find(|r| {
            key.iter().all(|(c, v)| {
                self.column(c)
                    .and_then(|k| r.cells[k].as_str().map(|s| s == *v))
                    .unwrap_or(false)
            })
        })
    }

    pub fn get(&self, row: &Row, column: &str) -> Option<f64> {
        self.column(column).and_then(|k| row.cells[k].as_f64())
    }

    fn render(&self, out: &mut String) {
        let mut header: Vec<String> = vec!["sub_run".into()];
        header.extend(self.columns.iter().cloned());
        header.extend(["seed".to_string(), "model".to_string()]);
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.sub_run.clone()];
                line.extend(r.cells.iter().map(Cell::render));
                line.push(r.seed.to_string());
                line.push(r.model_hash.chars().take(12).collect());
                line
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for line in &body {
            for (w, c) in widths.iter_mut().zip(line) {
                *w = (*w).max(c.chars().count());
            }
        }
        let fmt = |line: &[String]| {
            line.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "== {} ==", self.name);
        let _ = writeln!(out, "{}", fmt(&header));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for line in &body {
            let _ = writeln!(out, "{}", fmt(line));
        }
        out.push('\n');
    }
}

/// Delimited plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotFile {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl PlotFile {
    pub fn new(name: &str, header: &[&str]) -> Self {
        PlotFile {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubRunRecord {
    pub name: String,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub model_hashes: Vec<String>,
    pub queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub sub_runs: Vec<SubRunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub scenario: String,
    pub kind: String,
    pub tables: Vec<Table>,
}

impl Results {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("scenario {} ({})\n\n", self.scenario, self.kind);
        for t in &self.tables {
            t.render(&mut out);
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub sub_runs: Vec<(String, f64)>,
}

/// Everything a run produces. Only `timing` varies between identical runs, and it is written
/// to its own file.
#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub manifest: Manifest,
    pub results: Results,
    pub plots: Vec<PlotFile>,
    /// Extra JSON documents under `artifacts/`.
    pub artifacts: Vec<(String, serde_json::Value)>,
    /// Checkpoint bytes under `models/`.
    pub models: Vec<(String, Vec<u8>)>,
    pub timing: Timing,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.results.table(name)
    }

    /// Writes the bundle under `dir` and returns the files written, timing last.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        let mut put = |rel: String, bytes: Vec<u8>| -> Result<()> {
            let p = dir.join(rel);
            write(&p, &bytes)?;
            files.push(p);
            Ok(())
        };
        put("manifest.json".into(), json_bytes(&self.manifest)?)?;
        put("results.json".into(), json_bytes(&self.results)?)?;
        put("tables.txt".into(), self.results.render().into_bytes())?;
        for p in &self.plots {
            put(format!("plots/{}.csv", p.name), p.to_csv()?)?;
        }
        for (name, v) in &self.artifacts {
            put(format!("artifacts/{name}.json"), json_bytes(v)?)?;
        }
        for (name, bytes) in &self.models {
            put(format!("models/{name}.json"), bytes.clone())?;
        }
        put("timing.json".into(), json_bytes(&self.timing)?)?;
        Ok(files)
    }
}

/// Reads `results.json` from a bundle directory.
pub fn read_results(dir: &Path) -> Result<Results> {
    let path = dir.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_renders_aligned_and_round_trips() {
        let mut t = Table::new("asr", &["attack", "accuracy"]);
        t.rows.push(Row {
            scenario: "s".into(),
            sub_run: "c=0.1".into(),
            seed: 3,
            model_hash: "abcdef0123456789".into(),
            cells: vec!["csmia".into(), 0.5.into()],
        });
        t.rows.push(Row {
            scenario: "s".into(),
            sub_run: "c=0.2".into(),
            seed: 3,
            model_hash: String::new(),
            cells: vec!["lomia".into(), Cell::from(None::<f64>)],
        });
        let r = Results {
            scenario: "s".into(),
            kind: "k".into(),
            tables: vec![t],
        };
        let text = r.render();
        assert!(text.lines().any(|l| l.ends_with("abcdef012345")));
        assert!(text.contains("0.5000"));
        let back: Results = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let t = back.table("asr").unwrap();
        let row = t.find(&[("attack", "csmia")]).unwrap();
        assert_eq!(t.get(row, "accuracy"), Some(0.5));
    }

    #[test]
    fn plot_csv_leaves_missing_blank() {
        let mut p = PlotFile::new("x", &["a", "b"]);
        p.rows.push(vec![1.5.into(), Cell::from(None::<f64>)]);
        assert_eq!(String::from_utf8(p.to_csv().unwrap()).unwrap(), "a,b\n1.5,\n");
    }
}
