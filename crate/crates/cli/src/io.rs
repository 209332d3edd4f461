use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, CliResult};

/// Where a table goes.
pub enum Output {
    Stdout,
    File(PathBuf),
}

impl Output {
    pub fn is_file(&self) -> bool {
        matches!(self, Output::File(_))
    }
}

impl From<Option<PathBuf>> for Output {
    fn from(p: Option<PathBuf>) -> Self {
        p.map_or(Output::Stdout, Output::File)
    }
}

pub fn emit(out: &Output, bytes: &[u8]) -> CliResult<()> {
    match out {
        Output::Stdout => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
        Output::File(p) => {
            std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn csv_bytes<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref())).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(format!("csv: {e}")))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Input(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct BidRow {
    pub worker: String,
    pub bid: f64,
    pub capacity: f64,
}

pub fn read_bids(path: &Path) -> CliResult<Vec<BidRow>> {
    let rows: Vec<BidRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no workers", path.display())));
    }
    Ok(rows)
}

/// Reorders per-worker rows to match `ids`, rejecting missing or unknown workers.
fn align<T>(path: &Path, ids: &[String], rows: Vec<(String, T)>) -> CliResult<Vec<T>> {
    let mut slots: Vec<Option<T>> = ids.iter().map(|_| None).collect();
    for (worker, value) in rows {
        let i = ids
            .iter()
            .position(|id| *id == worker)
            .ok_or_else(|| CliError::Input(format!("{}: unknown worker {worker}", path.display())))?;
        slots[i] = Some(value);
    }
    slots
        .into_iter()
        .zip(ids)
        .map(|(s, id)| {
            s.ok_or_else(|| CliError::Input(format!("{}: missing worker {id}", path.display())))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct SubmissionRow {
    worker: String,
    submitted: f64,
    alpha: f64,
}

/// `(submitted, alpha)` per worker, in bid-file order.
pub fn read_submissions(path: &Path, ids: &[String]) -> CliResult<Vec<(f64, f64)>> {
    let rows: Vec<SubmissionRow> = read_rows(path)?;
    align(
        path,
        ids,
        rows.into_iter().map(|r| (r.worker, (r.submitted, r.alpha))).collect(),
    )
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    worker: String,
    v: f64,
    x_max: f64,
    beta: f64,
}

/// `(v, x_max, beta)` per worker, in bid-file order.
pub fn read_profiles(path: &Path, ids: &[String]) -> CliResult<Vec<(f64, f64, f64)>> {
    let rows: Vec<ProfileRow> = read_rows(path)?;
    align(
        path,
        ids,
        rows.into_iter().map(|r| (r.worker, (r.v, r.x_max, r.beta))).collect(),
    )
}
