//! Point regressors over the 48-dimensional lag window.
//!
//! Every family standardizes inputs with the training mean and standard
//! deviation before fitting. Predictive uncertainty is the in-sample residual
//! variance, see [`residual_variance`].

pub mod knn;
pub mod lasso;
pub mod mlp;
pub mod scaler;
pub mod tuning;

use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::features::{SupervisedDataset, INPUT_DIM};

pub use knn::KnnModel;
pub use lasso::LassoModel;
pub use mlp::{AdamConfig, Network};
pub use scaler::Scaler;
pub use tuning::{default_grid, fold_ranges, tune_chronological};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Knn,
    Lasso,
    Mlp,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Knn => "knn",
            Family::Lasso => "lasso",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Knn {
        k: usize,
    },
    Lasso {
        lambda: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_iterations")]
        iterations: usize,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![100, 50]
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_iterations() -> usize {
    1000
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Knn { .. } => Family::Knn,
            Hyperparams::Lasso { .. } => Family::Lasso,
            Hyperparams::Mlp { .. } => Family::Mlp,
        }
    }

    pub fn default_mlp() -> Self {
        Hyperparams::Mlp {
            hidden: default_hidden(),
            learning_rate: default_learning_rate(),
            iterations: default_iterations(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Knn { k } if *k == 0 => arg("knn k must be positive"),
            Hyperparams::Lasso { lambda } if !(lambda.is_finite() && *lambda >= 0.0) => {
                arg(format!("lasso lambda {lambda} must be finite and >= 0"))
            }
            Hyperparams::Mlp { hidden, learning_rate, iterations } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return arg("mlp hidden widths must be positive");
                }
                if !(learning_rate.is_finite() && *learning_rate > 0.0) {
                    return arg("mlp learning rate must be positive");
                }
                if *iterations == 0 {
                    return arg("mlp iteration count must be positive");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A family with its hyperparameters and the seed used for any randomness in fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl RegressorSpec {
    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        Self { hyper, seed }
    }

    pub fn knn(k: usize) -> Self {
        Self::new(Hyperparams::Knn { k }, 0)
    }

    pub fn lasso(lambda: f64) -> Self {
        Self::new(Hyperparams::Lasso { lambda }, 0)
    }

    pub fn mlp(seed: u64) -> Self {
        Self::new(Hyperparams::default_mlp(), seed)
    }

    pub fn family(&self) -> Family {
        self.hyper.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedParams {
    Knn(KnnModel),
    Lasso(LassoModel),
    Mlp {
        network: Network,
        target_mean: f64,
        target_std: f64,
    },
}

/// A fitted regressor. Prediction accepts exactly [`INPUT_DIM`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: RegressorSpec,
    pub scaler: Scaler,
    pub params: FittedParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    model: TrainedModel,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    /// False only for a Lasso fit that hit the sweep cap.
    pub fn converged(&self) -> bool {
        match &self.params {
            FittedParams::Lasso(l) => l.converged,
            _ => true,
        }
    }

    pub fn lasso(&self) -> Option<&LassoModel> {
        match &self.params {
            FittedParams::Lasso(l) => Some(l),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let x: &[f64; INPUT_DIM] = x
            .try_into()
            .map_err(|_| Error::Argument(format!("expected {INPUT_DIM} inputs, got {}", x.len())))?;
        if x.iter().any(|v| !v.is_finite()) {
            return arg("prediction input contains a non-finite value");
        }
        Ok(self.predict_row(x))
    }

    pub(crate) fn predict_row(&self, x: &[f64; INPUT_DIM]) -> f64 {
        let z = self.scaler.transform(x);
        match &self.params {
            FittedParams::Knn(m) => m.predict_standardized(&z),
            FittedParams::Lasso(m) => m.predict_standardized(&z),
            FittedParams::Mlp { network, target_mean, target_std } => {
                target_mean + target_std * network.predict_one(&z)
            }
        }
    }

    pub fn predict_batch(&self, inputs: &[[f64; INPUT_DIM]]) -> Vec<f64> {
        match &self.params {
            FittedParams::Mlp { network, target_mean, target_std } => {
                let z = standardized_matrix(&self.scaler, inputs);
                network
                    .predict_batch(z.view())
                    .iter()
                    .map(|v| target_mean + target_std * v)
                    .collect()
            }
            _ => inputs.iter().map(|x| self.predict_row(x)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model schema version {}",
                doc.schema_version
            )));
        }
        Ok(doc.model)
    }
}

fn standardized_matrix(scaler: &Scaler, inputs: &[[f64; INPUT_DIM]]) -> Array2<f64> {
    let mut z = Array2::zeros((inputs.len(), INPUT_DIM));
    for (mut row, x) in z.rows_mut().into_iter().zip(inputs) {
        row.assign(&Array1::from(scaler.transform(x).to_vec()));
    }
    z
}

/// Fits `spec` on `data`.
pub fn fit(spec: &RegressorSpec, data: &SupervisedDataset) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::InsufficientData("cannot fit on an empty dataset".into()));
    }
    spec.hyper.validate()?;
    data.check_finite()?;

    let scaler = Scaler::fit(&data.inputs);
    let params = match &spec.hyper {
        Hyperparams::Knn { k } => FittedParams::Knn(KnnModel {
            k: (*k).min(data.len()),
            inputs: knn::flatten(&scaler.transform_all(&data.inputs)),
            targets: data.targets.clone(),
        }),
        Hyperparams::Lasso { lambda } => {
            FittedParams::Lasso(lasso::fit(&scaler.transform_all(&data.inputs), &data.targets, *lambda))
        }
        Hyperparams::Mlp { hidden, learning_rate, iterations } => {
            let n = data.len() as f64;
            let target_mean = data.targets.iter().sum::<f64>() / n;
            // a constant target keeps target_std = 0 so predictions are exactly the mean
            let target_std = (data.targets.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / n).sqrt();
            let divisor = if target_std > 1e-12 { target_std } else { 1.0 };
            let z = standardized_matrix(&scaler, &data.inputs);
            let y = Array1::from_iter(data.targets.iter().map(|v| (v - target_mean) / divisor));
            let mut network = Network::init(INPUT_DIM, hidden, spec.seed);
            let cfg = AdamConfig { learning_rate: *learning_rate, ..AdamConfig::default() };
            network.train(z.view(), y.view(), *iterations, cfg);
            FittedParams::Mlp { network, target_mean, target_std }
        }
    };
    Ok(TrainedModel { spec: spec.clone(), scaler, params })
}

/// Mean squared in-sample residual `(1/N) Σ (f(X_i) - Y_i)²`.
pub fn residual_variance(model: &TrainedModel, data: &SupervisedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData("residual variance of an empty dataset".into()));
    }
    let pred = model.predict_batch(&data.inputs);
    Ok(mean_squared_error(&pred, &data.targets))
}

pub(crate) fn mean_squared_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn dataset(rows: Vec<[f64; INPUT_DIM]>, targets: Vec<f64>) -> SupervisedDataset {
        let n = targets.len();
        SupervisedDataset { inputs: rows, targets, time_index: (23..23 + n).collect() }
    }

    fn random_rows(n: usize, seed: u64) -> Vec<[f64; INPUT_DIM]> {
        let mut r = rng::stream(seed, 0);
        (0..n).map(|_| std::array::from_fn(|_| r.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn constant_target_predicts_constant_for_all_families() {
        let rows = random_rows(60, 1);
        let d = dataset(rows.clone(), vec![4.2; 60]);
        let specs = [
            RegressorSpec::knn(5),
            RegressorSpec::lasso(0.1),
            RegressorSpec::new(Hyperparams::Mlp { hidden: vec![8, 4], learning_rate: 1e-3, iterations: 50 }, 1),
        ];
        for spec in specs {
            let m = fit(&spec, &d).unwrap();
            for x in random_rows(5, 2) {
                let p = m.predict(&x).unwrap();
                assert!((p - 4.2).abs() < 1e-9, "{:?}: {p}", spec.family());
            }
        }
    }

    #[test]
    fn knn_one_interpolates_training_data() {
        let rows = random_rows(80, 3);
        let targets: Vec<f64> = (0..80).map(|i| i as f64).collect();
        let d = dataset(rows.clone(), targets.clone());
        let m = fit(&RegressorSpec::knn(1), &d).unwrap();
        for (x, y) in rows.iter().zip(&targets) {
            assert_eq!(m.predict(x).unwrap(), *y);
        }
        assert_eq!(residual_variance(&m, &d).unwrap(), 0.0);
    }

    #[test]
    fn null_lasso_predicts_mean() {
        let rows = random_rows(50, 4);
        let targets: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let mean = targets.iter().sum::<f64>() / 50.0;
        let m = fit(&RegressorSpec::lasso(1e6), &dataset(rows, targets)).unwrap();
        assert!(m.lasso().unwrap().coef.iter().all(|&c| c == 0.0));
        assert!((m.predict(&[0.3; INPUT_DIM]).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn residual_variance_of_constant_model() {
        let rows = random_rows(2, 5);
        let d = dataset(rows, vec![2.0, 4.0]);
        let m = fit(&RegressorSpec::lasso(1e6), &d).unwrap();
        assert!((residual_variance(&m, &d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lasso_residual_variance_recovers_noise_level() {
        let n = 5000;
        let mut r = rng::stream(6, 0);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let rows: Vec<[f64; INPUT_DIM]> = (0..n)
            .map(|_| {
                let mut x = [0.0; INPUT_DIM];
                x[0] = r.gen_range(-2.0..2.0);
                x
            })
            .collect();
        let targets = rows.iter().map(|x| 2.0 * x[0] + noise.sample(&mut r)).collect();
        let d = dataset(rows, targets);
        let m = fit(&RegressorSpec::lasso(1e-4), &d).unwrap();
        let v = residual_variance(&m, &d).unwrap();
        assert!((v - 0.25).abs() < 0.03, "{v}");
    }

    #[test]
    fn mlp_learns_linear_target() {
        let mut rows = vec![[0.0; INPUT_DIM]; 200];
        let mut r = rng::stream(7, 0);
        for x in &mut rows {
            x[0] = r.gen_range(-1.0..1.0);
        }
        let targets = rows.iter().map(|x| x[0]).collect();
        let d = dataset(rows, targets);
        let m = fit(&RegressorSpec::mlp(11), &d).unwrap();
        let mse = residual_variance(&m, &d).unwrap();
        assert!(mse < 1e-2, "{mse}");
    }

    #[test]
    fn knn_is_scale_invariant() {
        let rows = random_rows(100, 8);
        let targets: Vec<f64> = rows.iter().map(|x| x[0] + x[3]).collect();
        let mut scaled = rows.clone();
        scaled.iter_mut().for_each(|x| x[3] *= 1000.0);
        let a = fit(&RegressorSpec::knn(4), &dataset(rows.clone(), targets.clone())).unwrap();
        let b = fit(&RegressorSpec::knn(4), &dataset(scaled.clone(), targets)).unwrap();
        for (x, xs) in random_rows(20, 9).iter().zip(random_rows(20, 9)) {
            let mut xs = xs;
            xs[3] *= 1000.0;
            assert!((a.predict(x).unwrap() - b.predict(&xs).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let rows = random_rows(40, 10);
        let targets: Vec<f64> = rows.iter().map(|x| x[1]).collect();
        let d = dataset(rows, targets);
        let spec = RegressorSpec::new(Hyperparams::Mlp { hidden: vec![6, 3], learning_rate: 1e-2, iterations: 30 }, 5);
        assert_eq!(fit(&spec, &d).unwrap(), fit(&spec, &d).unwrap());
    }

    #[test]
    fn errors() {
        let mut rows = random_rows(10, 11);
        let d = dataset(rows.clone(), vec![1.0; 10]);
        let m = fit(&RegressorSpec::knn(2), &d).unwrap();
        assert!(matches!(m.predict(&[0.0; 47]), Err(Error::Argument(_))));
        rows[3][7] = f64::NAN;
        assert!(matches!(fit(&RegressorSpec::knn(2), &dataset(rows, vec![1.0; 10])), Err(Error::Data(_))));
        assert!(matches!(fit(&RegressorSpec::knn(0), &d), Err(Error::Argument(_))));
        assert!(matches!(fit(&RegressorSpec::lasso(-1.0), &d), Err(Error::Argument(_))));
    }

    #[test]
    fn json_document_round_trip() {
        let rows = random_rows(30, 12);
        let targets: Vec<f64> = rows.iter().map(|x| x[2] * 3.0).collect();
        let d = dataset(rows.clone(), targets);
        let spec = RegressorSpec::new(Hyperparams::Mlp { hidden: vec![4, 3], learning_rate: 1e-2, iterations: 20 }, 2);
        for spec in [RegressorSpec::knn(3), RegressorSpec::lasso(0.01), spec] {
            let m = fit(&spec, &d).unwrap();
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            for x in &rows {
                assert_eq!(m.predict(x).unwrap(), back.predict(x).unwrap());
            }
        }
        assert!(TrainedModel::from_json(r#"{"schema_version":99,"model":{}}"#).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: RegressorSpec = serde_json::from_str(r#"{"family":"mlp","seed":3}"#).unwrap();
        assert_eq!(s, RegressorSpec::mlp(3));
        let s: RegressorSpec = serde_json::from_str(r#"{"family":"knn","k":7}"#).unwrap();
        assert_eq!(s, RegressorSpec::knn(7));
    }
}
