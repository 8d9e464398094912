//! Coverage probability and NRMSE over the observed test targets.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::features::forecast_origins;
use crate::intervals::PredictionInterval;
use crate::timeseries::HourlySeries;

/// Next-hour truth `P_{t+1}` for each forecast origin; `None` where masked.
pub fn forecast_targets(test: &HourlySeries) -> Vec<Option<f64>> {
    forecast_origins(test.len()).map(|t| test.power()[t + 1]).collect()
}

fn check_aligned(len: usize, truths: &[Option<f64>]) -> Result<()> {
    if len != truths.len() {
        return arg(format!("{len} predictions but {} targets", truths.len()));
    }
    Ok(())
}

/// Fraction of observed targets inside their (closed) interval.
pub fn coverage(intervals: &[PredictionInterval], truths: &[Option<f64>]) -> Result<f64> {
    check_aligned(intervals.len(), truths)?;
    let (mut hit, mut n) = (0usize, 0usize);
    for (iv, y) in intervals.iter().zip(truths) {
        if let Some(y) = y {
            n += 1;
            hit += usize::from(iv.contains(*y));
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(hit as f64 / n as f64)
}

/// RMSE over observed targets divided by the largest observed target.
pub fn nrmse(means: &[f64], truths: &[Option<f64>]) -> Result<f64> {
    check_aligned(means.len(), truths)?;
    let (mut sse, mut n, mut y_max) = (0.0, 0usize, f64::NEG_INFINITY);
    for (m, y) in means.iter().zip(truths) {
        if let Some(y) = y {
            sse += (m - y).powi(2);
            n += 1;
            y_max = y_max.max(*y);
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if y_max <= 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    Ok((sse / n as f64).sqrt() / y_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: f64,
    pub nrmse: f64,
    pub n_evaluated: usize,
    pub alpha: f64,
    /// Mean interval width over the evaluated hours (diagnostic only).
    pub mean_width: f64,
}

impl EvalReport {
    pub fn evaluate(
        intervals: &[PredictionInterval],
        means: &[f64],
        truths: &[Option<f64>],
        alpha: f64,
    ) -> Result<Self> {
        let coverage = coverage(intervals, truths)?;
        let nrmse = nrmse(means, truths)?;
        let observed: Vec<&PredictionInterval> =
            intervals.iter().zip(truths).filter(|(_, y)| y.is_some()).map(|(iv, _)| iv).collect();
        let mean_width = observed.iter().map(|iv| iv.width()).sum::<f64>() / observed.len() as f64;
        Ok(Self { coverage, nrmse, n_evaluated: observed.len(), alpha, mean_width })
    }
}
