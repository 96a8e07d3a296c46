//! CSV and JSON emission. Every file is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};

use lambda_landscape::experiments::{Histogram, SweepRow};
use lambda_landscape::optimize::TrajectoryPoint;
use serde::Serialize;

use crate::CliError;

/// 17 significant digits: every `f64` round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e.error })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries always serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> Vec<u8> {
    csv_bytes(
        &["iteration", "J", "grad_norm"],
        points.iter().map(|p| [p.iteration.to_string(), fmt_f64(p.objective), fmt_f64(p.grad_norm)]),
    )
}

pub fn histogram_csv(h: &Histogram) -> Vec<u8> {
    csv_bytes(&["bin_left", "bin_right", "count"], h.rows().map(|(l, r, c)| [fmt_f64(l), fmt_f64(r), c.to_string()]))
}

/// Rows pair GRAPE and BFGS results at equal `c0`; an empty mean means
/// every GRAPE run failed.
pub fn sweep_csv(grape: &[SweepRow], bfgs: &[SweepRow]) -> Vec<u8> {
    csv_bytes(
        &["c0", "n_fail_grape", "n_fail_bfgs", "mean_iters_grape"],
        grape.iter().zip(bfgs).map(|(g, b)| {
            [
                fmt_f64(g.c0),
                g.n_fail.to_string(),
                b.n_fail.to_string(),
                g.mean_iterations.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )
}
