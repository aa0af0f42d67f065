//! CSV tables and JSON sidecars.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{CliResult, Failure};
use crate::env::Environment;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Comma-separated table with a header row and LF line endings. Floats are
/// written in their shortest round-trip form.
pub struct Table<W: std::io::Write = BufWriter<File>> {
    writer: csv::Writer<W>,
    path: PathBuf,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| io_failure(path, e))?;
        Table::with_writer(BufWriter::new(file), path, header)
    }
}

impl Table<Vec<u8>> {
    /// Table held in memory; `path` only labels errors.
    pub fn in_memory(path: &Path, header: &[&str]) -> CliResult<Self> {
        Table::with_writer(Vec::new(), path, header)
    }

    pub fn into_bytes(self) -> CliResult<Vec<u8>> {
        let path = self.path;
        self.writer.into_inner().map_err(|e| io_failure(&path, e.error()))
    }
}

impl<W: std::io::Write> Table<W> {
    fn with_writer(inner: W, path: &Path, header: &[&str]) -> CliResult<Self> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(inner);
        writer.write_record(header).map_err(|e| io_failure(path, e))?;
        Ok(Table {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn row<S: serde::Serialize>(&mut self, record: S) -> CliResult<()> {
        self.writer
            .serialize(record)
            .map_err(|e| io_failure(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer.flush().map_err(|e| io_failure(&self.path, e))
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".run.json");
    PathBuf::from(s)
}

pub fn env_summary(env: &Environment, path: &Path) -> Value {
    json!({
        "path": path.display().to_string(),
        "a": env.a(),
        "b": env.b(),
        "n": env.segments(),
        "seed": env.seed(),
        "anchor_index": env.anchor_index(),
        "gauge_shift": env.gauge_shift(),
    })
}

/// Write `{"version": 1, "command", "config", "results"}` next to `out`.
pub fn write_sidecar(out: &Path, command: &str, config: Value, results: Value) -> CliResult<PathBuf> {
    let path = sidecar_path(out);
    let doc = json!({
        "version": 1,
        "command": command,
        "config": config,
        "results": results,
    });
    write_json(&path, &doc)?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

/// Numeric CSV: header names and rows of floats.
#[derive(Debug, Clone)]
pub struct NumericCsv {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericCsv {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn column_at(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// Read a CSV whose fields are all numbers. Empty or malformed input is an
/// I/O failure.
pub fn read_numeric_csv(path: &Path) -> CliResult<NumericCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| io_failure(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| io_failure(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(io_failure(path, "empty CSV"));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_failure(path, e))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_failure(path, format!("row {}: {e}", line + 2)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(io_failure(path, "CSV has no data rows"));
    }
    Ok(NumericCsv { headers, rows })
}
