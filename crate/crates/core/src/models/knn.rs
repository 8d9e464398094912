use serde::{Deserialize, Serialize};

use crate::features::INPUT_DIM;

/// Standardized training inputs (row-major, `INPUT_DIM` per row) and their targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

pub(crate) fn flatten(rows: &[[f64; INPUT_DIM]]) -> Vec<f64> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64; INPUT_DIM], b: &[f64; INPUT_DIM]) -> f64 {
    let mut s = 0.0;
    for j in 0..INPUT_DIM {
        let d = a[j] - b[j];
        s += d * d;
    }
    s
}

/// Indices of the `m` nearest rows of `inputs` to `query`, ordered by
/// `(distance, index)`.
pub(crate) fn nearest(inputs: &[f64], query: &[f64; INPUT_DIM], m: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = inputs
        .chunks_exact(INPUT_DIM)
        .enumerate()
        .map(|(i, x)| (sq_dist(x.try_into().expect("row width"), query), i))
        .collect();
    let m = m.min(d.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if m < d.len() {
        d.select_nth_unstable_by(m, cmp);
        d.truncate(m);
    }
    d.sort_unstable_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

impl KnnModel {
    pub fn predict_standardized(&self, z: &[f64; INPUT_DIM]) -> f64 {
        let nb = nearest(&self.inputs, z, self.k);
        nb.iter().map(|&i| self.targets[i]).sum::<f64>() / nb.len() as f64
    }
}
