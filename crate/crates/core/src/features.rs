//! One-hour-ahead supervised pairs from a completed series.
//!
//! Input layout, most recent hour first:
//! `(P_t, I_t, P_{t-1}, I_{t-1}, ..., P_{t-23}, I_{t-23})`, target `P_{t+1}`.
//! Hours are 0-based, so forecast origins run over `t = 23..=T-2`.

use crate::error::{arg, Error, Result};
use crate::timeseries::HourlySeries;

pub const WINDOW_HOURS: usize = 24;
pub const INPUT_DIM: usize = 2 * WINDOW_HOURS;

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub targets: Vec<f64>,
    /// Forecast origin hour `t` of each row (0-based).
    pub time_index: Vec<usize>,
}

impl SupervisedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Rows `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> SupervisedDataset {
        SupervisedDataset {
            inputs: self.inputs[from..to].to_vec(),
            targets: self.targets[from..to].to_vec(),
            time_index: self.time_index[from..to].to_vec(),
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let bad_input = self.inputs.iter().position(|x| x.iter().any(|v| !v.is_finite()));
        let bad_target = self.targets.iter().position(|y| !y.is_finite());
        match bad_input.or(bad_target) {
            Some(i) => Err(Error::Data(format!("non-finite value in row {i}"))),
            None => Ok(()),
        }
    }
}

fn window(power: &[f64], irradiance: &[f64], t: usize) -> [f64; INPUT_DIM] {
    let mut x = [0.0; INPUT_DIM];
    for lag in 0..WINDOW_HOURS {
        x[2 * lag] = power[t - lag];
        x[2 * lag + 1] = irradiance[t - lag];
    }
    x
}

/// All `N = T - 24` training pairs of a fully completed series.
pub fn build_training(series: &HourlySeries) -> Result<SupervisedDataset> {
    let power = series.complete_power()?;
    let n = series.len();
    if n < WINDOW_HOURS + 1 {
        return Err(Error::InsufficientData(format!(
            "need at least {} hours to form a training pair, got {n}",
            WINDOW_HOURS + 1
        )));
    }
    let irr = series.irradiance();
    let origins = WINDOW_HOURS - 1..n - 1;
    Ok(SupervisedDataset {
        inputs: origins.clone().map(|t| window(&power, irr, t)).collect(),
        targets: origins.clone().map(|t| power[t + 1]).collect(),
        time_index: origins.collect(),
    })
}

/// Input window at forecast origin `t` (0-based, `23 <= t <= T-2`).
pub fn build_test_input(series: &HourlySeries, t: usize) -> Result<[f64; INPUT_DIM]> {
    if t < WINDOW_HOURS - 1 || t + 2 > series.len() {
        return arg(format!(
            "forecast origin {t} outside [{}, {}]",
            WINDOW_HOURS - 1,
            series.len().saturating_sub(2)
        ));
    }
    let power = series.power()[t + 1 - WINDOW_HOURS..=t]
        .iter()
        .enumerate()
        .map(|(j, p)| p.ok_or(Error::IncompleteData(t + 1 - WINDOW_HOURS + j)))
        .collect::<Result<Vec<f64>>>()?;
    let irr = &series.irradiance()[t + 1 - WINDOW_HOURS..=t];
    Ok(window(&power, irr, WINDOW_HOURS - 1))
}

/// Forecast origins of a series of length `len`.
pub fn forecast_origins(len: usize) -> std::ops::Range<usize> {
    WINDOW_HOURS - 1..len.saturating_sub(1).max(WINDOW_HOURS - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::default_start_time;

    fn ramp(n: usize) -> HourlySeries {
        let p = (0..n).map(|t| t as f64).collect();
        let i = (0..n).map(|t| 1000.0 + t as f64).collect();
        HourlySeries::from_observed(default_start_time(), p, i).unwrap()
    }

    #[test]
    fn single_pair_at_boundary() {
        let d = build_training(&ramp(25)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.time_index, vec![23]);
        assert_eq!(d.targets, vec![24.0]);
        assert_eq!(d.inputs[0][0], 23.0);
        assert_eq!(d.inputs[0][46], 0.0);
    }

    #[test]
    fn paper_train_split_size() {
        let d = build_training(&ramp(6625)).unwrap();
        assert_eq!(d.len(), 6601);
        assert_eq!(*d.time_index.last().unwrap(), 6623);
        assert!(d.time_index.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn constant_series_alternates() {
        let s = HourlySeries::from_observed(default_start_time(), vec![3.0; 40], vec![0.5; 40]).unwrap();
        let d = build_training(&s).unwrap();
        for (x, y) in d.inputs.iter().zip(&d.targets) {
            assert!(x.chunks(2).all(|c| c == [3.0, 0.5]));
            assert_eq!(*y, 3.0);
        }
    }

    #[test]
    fn errors() {
        let short = ramp(24);
        assert!(matches!(build_training(&short), Err(Error::InsufficientData(_))));
        let gappy = ramp(30).with_power((0..30).map(|t| (t != 5).then_some(1.0)).collect()).unwrap();
        assert!(matches!(build_training(&gappy), Err(Error::IncompleteData(5))));
        let s = ramp(30);
        assert!(matches!(build_test_input(&s, 22), Err(Error::Argument(_))));
        assert!(matches!(build_test_input(&s, 29), Err(Error::Argument(_))));
        assert!(build_test_input(&s, 28).is_ok());
    }

    #[test]
    fn test_input_layout() {
        let s = ramp(30);
        let x = build_test_input(&s, 23).unwrap();
        assert_eq!(x[0], 23.0);
        assert_eq!(x[1], 1023.0);
        assert_eq!(x[46], 0.0);
        assert_eq!(x[47], 1000.0);
    }

    #[test]
    fn train_and_test_constructors_agree_without_leakage() {
        let s = ramp(80);
        let d = build_training(&s).unwrap();
        for (row, &t) in d.time_index.iter().enumerate() {
            let x = build_test_input(&s, t).unwrap();
            assert_eq!(x, d.inputs[row]);
            // ramp values encode the hour: nothing from t+1 onwards
            assert!(x.chunks(2).all(|c| c[0] <= t as f64));
        }
        assert_eq!(forecast_origins(80), 23..79);
    }
}
