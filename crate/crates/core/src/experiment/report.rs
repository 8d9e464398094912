//! Per-hour cell tables and their re-aggregation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One test forecast origin of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRow {
    /// Forecast origin, 0-based within the test series.
    pub t: usize,
    /// Timestamp of the predicted hour `t + 1`.
    pub timestamp: String,
    /// Ground-truth power at `t + 1`, when known.
    pub truth: Option<f64>,
    /// 1 when the target was hidden from the pipeline.
    pub mask: u8,
    pub mean: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
    pub lower: f64,
    pub upper: f64,
    /// Membership of the truth in `[lower, upper]`; empty for masked targets.
    pub covered: Option<u8>,
}

pub fn write_rows<W: Write>(rows: &[HourRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<HourRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Metrics recomputed from a cell table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub id: String,
    pub coverage: f64,
    pub nrmse: f64,
    pub n_evaluated: usize,
    pub mean_width: f64,
}

pub fn metrics_from_rows(id: &str, rows: &[HourRow]) -> Result<CellMetrics> {
    let mut hit = 0usize;
    let (mut n, mut sse, mut y_max, mut width) = (0usize, 0.0, f64::NEG_INFINITY, 0.0);
    for r in rows.iter().filter(|r| r.mask == 0) {
        let y = r
            .truth
            .ok_or_else(|| Error::Data(format!("{id}: unmasked row t={} has no truth", r.t)))?;
        n += 1;
        hit += usize::from(r.covered == Some(1));
        sse += (r.mean - y).powi(2);
        y_max = y_max.max(y);
        width += r.upper - r.lower;
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if y_max <= 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    Ok(CellMetrics {
        id: id.to_string(),
        coverage: hit as f64 / n as f64,
        nrmse: (sse / n as f64).sqrt() / y_max,
        n_evaluated: n,
        mean_width: width / n as f64,
    })
}

pub const CELLS_DIR: &str = "cells";

/// Recomputes metrics for every `cells/*.csv` under `dir`, sorted by id.
pub fn aggregate(dir: &Path) -> Result<Vec<CellMetrics>> {
    let cells = dir.join(CELLS_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&cells)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", cells.display()))))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            metrics_from_rows(&id, &read_rows(p)?)
        })
        .collect()
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
