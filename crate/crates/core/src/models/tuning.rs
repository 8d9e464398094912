//! Expanding-window hyperparameter selection.
//!
//! The dataset is cut into `folds + 1` equal chronological chunks. Fold `i`
//! trains on chunks `1..=i` and validates on chunk `i + 1`; the final fold
//! also absorbs the remainder rows.

use std::ops::Range;

use super::knn::{flatten, nearest};
use super::lasso::lambda_path;
use super::{fit, mean_squared_error, Family, Hyperparams, RegressorSpec, Scaler};
use crate::error::{arg, Error, Result};
use crate::features::SupervisedDataset;

pub const KNN_GRID: [usize; 13] = [1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377];
pub const LASSO_PATH_LEN: usize = 20;
pub const LASSO_PATH_RATIO: f64 = 1e-4;

/// `(train, validation)` row ranges for each fold.
pub fn fold_ranges(n: usize, folds: usize) -> Result<Vec<(Range<usize>, Range<usize>)>> {
    if folds < 2 {
        return arg(format!("need at least 2 folds, got {folds}"));
    }
    let chunk = n / (folds + 1);
    if chunk < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot form {folds} chronological folds"
        )));
    }
    Ok((1..=folds)
        .map(|i| {
            let end = if i == folds { n } else { (i + 1) * chunk };
            (0..i * chunk, i * chunk..end)
        })
        .collect())
}

/// Default candidates for a family; the Lasso path depends on `data`.
pub fn default_grid(family: Family, data: &SupervisedDataset, seed: u64) -> Vec<RegressorSpec> {
    match family {
        Family::Knn => KNN_GRID
            .iter()
            .filter(|&&k| k < data.len())
            .map(|&k| RegressorSpec::new(Hyperparams::Knn { k }, seed))
            .collect(),
        Family::Lasso => {
            let z = Scaler::fit(&data.inputs).transform_all(&data.inputs);
            lambda_path(&z, &data.targets, LASSO_PATH_LEN, LASSO_PATH_RATIO)
                .into_iter()
                .map(|lambda| RegressorSpec::new(Hyperparams::Lasso { lambda }, seed))
                .collect()
        }
        Family::Mlp => vec![RegressorSpec::new(Hyperparams::default_mlp(), seed)],
    }
}

/// Candidate with the lowest mean validation MSE; ties keep grid order.
pub fn tune_chronological(grid: &[RegressorSpec], data: &SupervisedDataset, folds: usize) -> Result<RegressorSpec> {
    let first = grid.first().ok_or_else(|| Error::Argument("empty tuning grid".into()))?;
    if grid.len() == 1 {
        return Ok(first.clone());
    }
    let scores = validation_scores(grid, data, folds)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(grid[best].clone())
}

/// Mean validation MSE of each candidate.
pub fn validation_scores(grid: &[RegressorSpec], data: &SupervisedDataset, folds: usize) -> Result<Vec<f64>> {
    let ranges = fold_ranges(data.len(), folds)?;
    let all_knn: Option<Vec<usize>> = grid
        .iter()
        .map(|s| match s.hyper {
            Hyperparams::Knn { k } => Some(k),
            _ => None,
        })
        .collect();

    let mut totals = vec![0.0; grid.len()];
    for (train, val) in ranges {
        let tr = data.slice(train.start, train.end);
        let va = data.slice(val.start, val.end);
        match &all_knn {
            // every k shares one neighbour ordering per validation row
            Some(ks) => {
                let scaler = Scaler::fit(&tr.inputs);
                let flat = flatten(&scaler.transform_all(&tr.inputs));
                let k_max = ks.iter().copied().max().unwrap_or(1);
                let mut sse = vec![0.0; grid.len()];
                for (x, y) in va.inputs.iter().zip(&va.targets) {
                    let nb = nearest(&flat, &scaler.transform(x), k_max);
                    let mut prefix = Vec::with_capacity(nb.len() + 1);
                    prefix.push(0.0);
                    for &i in &nb {
                        prefix.push(prefix.last().expect("seeded") + tr.targets[i]);
                    }
                    for (c, &k) in ks.iter().enumerate() {
                        let k = k.clamp(1, nb.len());
                        sse[c] += (prefix[k] / k as f64 - y).powi(2);
                    }
                }
                for (t, s) in totals.iter_mut().zip(sse) {
                    *t += s / va.len() as f64;
                }
            }
            None => {
                for (t, spec) in totals.iter_mut().zip(grid) {
                    let model = fit(spec, &tr)?;
                    *t += mean_squared_error(&model.predict_batch(&va.inputs), &va.targets);
                }
            }
        }
    }
    let folds = folds as f64;
    Ok(totals.into_iter().map(|t| t / folds).collect())
}
