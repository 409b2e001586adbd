//! Fixed-schema CSV outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const METRICS_HEADER: &str =
    "experiment,seed,mode,variant,n_demos,n_steps,success_rate,pick_err_m,place_err_m,wall_s";
pub const LOSS_HEADER: &str = "epoch,loss";

/// One evaluated run. Summary rows leave `seed` empty and hold medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub seed: Option<u64>,
    pub mode: String,
    pub variant: String,
    pub n_demos: usize,
    pub n_steps: usize,
    pub success_rate: f64,
    pub pick_err_m: f64,
    pub place_err_m: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub loss: f64,
}

fn ensure_parent(path: &Path) -> Result<(), HarnessError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<(), HarnessError> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| HarnessError::csv(path, e))?;
    w.write_record(header.split(','))
        .map_err(|e| HarnessError::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(
    path: &Path,
    header: &str,
) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let found = r
        .headers()
        .map_err(|e| HarnessError::csv(path, e))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(HarnessError::Config(format!(
            "{}: unexpected header `{found}`",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::csv(path, e)))
        .collect()
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    write_rows(path, METRICS_HEADER, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    read_rows(path, METRICS_HEADER)
}

pub fn write_losses(path: &Path, losses: &[f64]) -> Result<(), HarnessError> {
    let rows: Vec<LossRow> = losses
        .iter()
        .enumerate()
        .map(|(epoch, &loss)| LossRow { epoch, loss })
        .collect();
    write_rows(path, LOSS_HEADER, &rows)
}

pub fn read_losses(path: &Path) -> Result<Vec<LossRow>, HarnessError> {
    read_rows(path, LOSS_HEADER)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// Median row over the per-seed rows of one cell.
pub fn summarize(rows: &[MetricsRow]) -> Option<MetricsRow> {
    let first = rows.first()?;
    let col = |f: fn(&MetricsRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Some(MetricsRow {
        experiment: first.experiment.clone(),
        seed: None,
        mode: first.mode.clone(),
        variant: first.variant.clone(),
        n_demos: first.n_demos,
        n_steps: first.n_steps,
        success_rate: col(|r| r.success_rate),
        pick_err_m: col(|r| r.pick_err_m),
        place_err_m: col(|r| r.place_err_m),
        wall_s: col(|r| r.wall_s),
    })
}
