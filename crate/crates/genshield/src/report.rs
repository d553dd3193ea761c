//! JSON run reports and plot-ready CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use genshield_core::modelstore::sha256_hex;
use serde::Serialize;
use serde_json::Value;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub timestamp: String,
    pub seed: u64,
    pub precision: String,
    pub config: BTreeMap<String, String>,
    /// Files read, keyed by display path, valued by SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Files written.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub results: Value,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig, precision: &str) -> Result<Report> {
        let timestamp = OffsetDateTime::now_utc()
            .format(&Rfc3339)
            .map_err(|e| Error::Config(format!("clock: {e}")))?;
        Ok(Report {
            command: command.to_string(),
            timestamp,
            seed: cfg.seed()?,
            precision: precision.to_string(),
            config: cfg.snapshot().clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            warnings: Vec::new(),
            results: Value::Null,
        })
    }

    pub fn input(&mut self, out: &Path, path: &Path) -> Result<()> {
        self.inputs.insert(display_path(out, path), digest_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, out: &Path, path: &Path) -> Result<()> {
        self.outputs.insert(display_path(out, path), digest_path(path)?);
        Ok(())
    }

    /// Writes `<out>/reports/<command>.json` and returns its path.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let dir = out.join("reports");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("{}.json", self.command));
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Paths under `out` are shown relative to it so reports do not depend on
/// where the output directory lives.
fn display_path(out: &Path, path: &Path) -> String {
    path.strip_prefix(out)
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| path.display().to_string())
}

/// SHA-256 of a file, or for a directory of the sorted `name digest` lines
/// of the files directly inside it.
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut lines = Vec::new();
        for entry in fs::read_dir(path).map_err(io_err(path))? {
            let entry = entry.map_err(io_err(path))?;
            if entry.path().is_file() {
                lines.push(format!(
                    "{} {}\n",
                    entry.file_name().to_string_lossy(),
                    digest_path(&entry.path())?
                ));
            }
        }
        lines.sort();
        Ok(sha256_hex(lines.concat().as_bytes()))
    } else {
        Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
    }
}

/// Writes a CSV table with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    crate::error::DataError::Invalid(format!("{}: {e}", path.display())).into()
}

/// Report with the timestamp removed, for comparing reruns.
pub fn without_timestamp(mut report: Value) -> Value {
    if let Some(obj) = report.as_object_mut() {
        obj.remove("timestamp");
    }
    report
}
