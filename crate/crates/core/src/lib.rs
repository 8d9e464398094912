//! Propagating missing-data uncertainty into one-hour-ahead PV power forecasts.
//!
//! Missing power values are imputed B times by sampling from a k-nearest
//! neighbour estimate of `Pr(power | irradiance)`. Each completed dataset is
//! used to train a point regressor, the per-round predictive means and
//! residual variances are pooled with Rubin's rule, and the pooled moments are
//! turned into normal or gamma prediction intervals.
//!
//! The crate is organised along the pipeline:
//!
//! - [`timeseries`]: hourly series with an explicit missingness mask, CSV I/O.
//! - [`missingness`]: block-wise masking with retained ground truth.
//! - [`imputation`]: kNN-mean (single) and kNN-sampler (stochastic) imputation.
//! - [`features`]: 48-dimensional lag windows and next-hour targets.
//! - [`models`]: kNN, Lasso and MLP regressors plus chronological tuning.
//! - [`mi`]: imputation rounds and Rubin pooling.
//! - [`intervals`]: prediction intervals and the special functions behind them.
//! - [`metrics`]: coverage probability and NRMSE.
//! - [`synth`]: synthetic PV data with a known conditional distribution.
//! - [`experiment`]: config-driven experiment runs and report files.

pub mod error;
pub mod experiment;
pub mod features;
pub mod imputation;
pub mod intervals;
pub mod metrics;
pub mod mi;
pub mod missingness;
pub mod models;
pub mod rng;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use features::{build_test_input, build_training, SupervisedDataset, WINDOW_HOURS, INPUT_DIM};
pub use imputation::{complete_series, fit_sampler, select_k, ConditionalSampler, ImputationMode, KChoice};
pub use intervals::{gamma_interval, normal_interval, IntervalFamily, PredictionInterval};
pub use metrics::{coverage, forecast_targets, nrmse, EvalReport};
pub use mi::{rubin_pool, run_pipeline, PooledPrediction, RoundPrediction, Setup};
pub use missingness::{inject_missing, missing_fraction, GroundTruth, MissingSpec};
pub use models::{fit, residual_variance, tune_chronological, Family, Hyperparams, RegressorSpec, TrainedModel};
pub use synth::SynthSpec;
pub use timeseries::HourlySeries;
