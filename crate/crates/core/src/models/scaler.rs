use serde::{Deserialize, Serialize};

use crate::features::INPUT_DIM;

/// Per-feature standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero-variance features get 1.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(inputs: &[[f64; INPUT_DIM]]) -> Self {
        let n = inputs.len() as f64;
        let mut mean = vec![0.0; INPUT_DIM];
        for x in inputs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; INPUT_DIM];
        for x in inputs {
            for j in 0..INPUT_DIM {
                let d = x[j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        let mut z = [0.0; INPUT_DIM];
        for j in 0..INPUT_DIM {
            z[j] = (x[j] - self.mean[j]) / self.std[j];
        }
        z
    }

    pub fn transform_all(&self, inputs: &[[f64; INPUT_DIM]]) -> Vec<[f64; INPUT_DIM]> {
        inputs.iter().map(|x| self.transform(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_and_guards_constant_features() {
        let mut a = [0.0; INPUT_DIM];
        let mut b = [0.0; INPUT_DIM];
        a[0] = 1.0;
        b[0] = 3.0;
        a[1] = 5.0;
        b[1] = 5.0;
        let s = Scaler::fit(&[a, b]);
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.std[1], 1.0);
        assert_eq!(s.transform(&a)[0], -1.0);
        assert_eq!(s.transform(&a)[1], 0.0);
        assert!(s.std.iter().all(|&v| v > 0.0));
    }
}
