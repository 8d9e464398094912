//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Objective on standardized inputs `z`:
//! `(1/2N) ||y - b - z·β||² + λ ||β||₁`, intercept `b` unpenalized.

use serde::{Deserialize, Serialize};

use crate::features::INPUT_DIM;

pub const MAX_SWEEPS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub sweeps: usize,
}

impl LassoModel {
    pub fn predict_standardized(&self, z: &[f64; INPUT_DIM]) -> f64 {
        self.intercept + self.coef.iter().zip(z).map(|(b, x)| b * x).sum::<f64>()
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Column-major centered design shared by the solver and `lambda_max`.
struct Design {
    cols: Vec<Vec<f64>>,
    col_mean: Vec<f64>,
    col_sq: Vec<f64>,
    y_mean: f64,
    resid: Vec<f64>,
}

impl Design {
    fn new(z: &[[f64; INPUT_DIM]], y: &[f64]) -> Self {
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let mut cols = Vec::with_capacity(INPUT_DIM);
        let mut col_mean = Vec::with_capacity(INPUT_DIM);
        let mut col_sq = Vec::with_capacity(INPUT_DIM);
        for j in 0..INPUT_DIM {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / n;
            let c: Vec<f64> = z.iter().map(|r| r[j] - m).collect();
            col_sq.push(c.iter().map(|v| v * v).sum::<f64>() / n);
            col_mean.push(m);
            cols.push(c);
        }
        let resid = y.iter().map(|v| v - y_mean).collect();
        Self { cols, col_mean, col_sq, y_mean, resid }
    }

    fn correlation(&self, j: usize) -> f64 {
        let n = self.resid.len() as f64;
        self.cols[j].iter().zip(&self.resid).map(|(a, b)| a * b).sum::<f64>() / n
    }
}

/// Smallest λ for which every coefficient is zero.
pub fn lambda_max(z: &[[f64; INPUT_DIM]], y: &[f64]) -> f64 {
    let d = Design::new(z, y);
    (0..INPUT_DIM).map(|j| d.correlation(j).abs()).fold(0.0, f64::max)
}

/// `count` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_path(z: &[[f64; INPUT_DIM]], y: &[f64], count: usize, ratio: f64) -> Vec<f64> {
    let hi = lambda_max(z, y);
    if hi <= 0.0 || count < 2 {
        return vec![hi];
    }
    let (lhi, llo) = (hi.ln(), (hi * ratio).ln());
    (0..count)
        .map(|i| (lhi + (llo - lhi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn fit(z: &[[f64; INPUT_DIM]], y: &[f64], lambda: f64) -> LassoModel {
    let mut d = Design::new(z, y);
    let n = y.len() as f64;
    let mut coef = vec![0.0; INPUT_DIM];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..INPUT_DIM {
            if d.col_sq[j] == 0.0 {
                continue;
            }
            let rho = d.cols[j].iter().zip(&d.resid).map(|(a, b)| a * b).sum::<f64>() / n
                + d.col_sq[j] * coef[j];
            let new = soft_threshold(rho, lambda) / d.col_sq[j];
            let delta = new - coef[j];
            if delta != 0.0 {
                for (r, x) in d.resid.iter_mut().zip(&d.cols[j]) {
                    *r -= x * delta;
                }
                coef[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < TOLERANCE {
            converged = true;
            break;
        }
    }

    let intercept = d.y_mean - coef.iter().zip(&d.col_mean).map(|(b, m)| b * m).sum::<f64>();
    LassoModel { lambda, coef, intercept, converged, sweeps }
}
