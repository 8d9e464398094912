//! Config-driven experiments over setups, models, round counts and interval
//! families, with JSON/CSV report files.
//!
//! A run writes into its output directory:
//!
//! - `summary.json`: one entry per cell with its [`EvalReport`] or error. It
//!   depends only on the config, so identical runs give identical bytes.
//! - `cells/<id>.csv`: per-hour [`HourRow`] tables for each successful cell.
//! - `manifest.json`: the resolved config, derived seeds, sampler `k`,
//!   realised missing fractions and the tuned hyperparameters.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{DataSource, ExperimentConfig, ModelConfig, CONFIG_SCHEMA_VERSION};
pub use report::{aggregate, CellMetrics, HourRow};

use crate::error::Result;
use crate::features::{build_training, forecast_origins};
use crate::intervals::{interval, IntervalFamily, PredictionInterval};
use crate::metrics::{forecast_targets, EvalReport};
use crate::mi::{pool_forecasts, FittedRound, Pipeline, PooledPrediction, RoundForecast, Setup};
use crate::missingness::{inject_missing, missing_fraction, MissingSpec};
use crate::models::{default_grid, tune_chronological, Family, RegressorSpec};
use crate::rng::{derive_seed, label_id};
use crate::timeseries::HourlySeries;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Identity of one reported cell. Setup 1 always has `b = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub setup: Setup,
    pub model: Family,
    pub b: usize,
    pub interval_family: IntervalFamily,
}

impl CellKey {
    pub fn id(&self) -> String {
        format!("setup{}-{}-b{}-{}", self.setup, self.model, self.b, self.interval_family)
    }
}

/// Cells of a config in reporting order; setup 1 is not repeated per B.
pub fn cell_keys(config: &ExperimentConfig) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for m in &config.models {
        for setup in config.unique_setups() {
            let bs = if setup == Setup::SiTrainSiTest { vec![1] } else { config.unique_b_values() };
            for b in bs {
                for interval_family in config.unique_interval_families() {
                    keys.push(CellKey { setup, model: m.family, b, interval_family });
                }
            }
        }
    }
    keys
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Ok { report: EvalReport, csv: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub id: String,
    #[serde(flatten)]
    pub key: CellKey,
    #[serde(flatten)]
    pub status: CellStatus,
}

impl CellSummary {
    pub fn report(&self) -> Option<&EvalReport> {
        match &self.status {
            CellStatus::Ok { report, .. } => Some(report),
            CellStatus::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub alpha: f64,
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn cell(&self, key: &CellKey) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.key == *key)
    }

    pub fn coverage(&self, key: &CellKey) -> Option<f64> {
        self.cell(key).and_then(|c| c.report()).map(|r| r.coverage)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub master: u64,
    pub train_missing: u64,
    pub test_missing: u64,
    pub imputation: u64,
}

impl DerivedSeeds {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            train_missing: derive_seed(master, &[label_id("train-missing")]),
            test_missing: derive_seed(master, &[label_id("test-missing")]),
            imputation: derive_seed(master, &[label_id("imputation")]),
        }
    }

    pub fn model(&self, family: Family) -> u64 {
        derive_seed(self.master, &[label_id("model"), label_id(family.name())])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub family: Family,
    pub candidates: usize,
    pub resolved: Option<RegressorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub seeds: DerivedSeeds,
    pub train_hours: usize,
    pub test_hours: usize,
    pub train_missing_fraction: f64,
    pub test_missing_fraction: f64,
    pub sampler_k: usize,
    pub models: Vec<ModelManifest>,
    pub files: Vec<String>,
}

/// Everything a run produces, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub summary: Summary,
    pub manifest: Manifest,
    pub tables: BTreeMap<String, Vec<HourRow>>,
}

struct EvalContext<'a> {
    test: &'a HourlySeries,
    /// Test power before masking (original gaps stay `None`).
    truth: &'a [Option<f64>],
    targets: Vec<Option<f64>>,
    alpha: f64,
    clip_normal_lower: bool,
}

impl EvalContext<'_> {
    fn cell(&self, pooled: &[PooledPrediction], family: IntervalFamily) -> Result<(EvalReport, Vec<HourRow>)> {
        let intervals = pooled
            .iter()
            .map(|p| {
                let iv = interval(family, p.mean, p.total_var, self.alpha)?;
                Ok(if self.clip_normal_lower && family == IntervalFamily::Normal {
                    PredictionInterval { lower: iv.lower.max(0.0), ..iv }
                } else {
                    iv
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = pooled.iter().map(|p| p.mean).collect();
        let report = EvalReport::evaluate(&intervals, &means, &self.targets, self.alpha)?;
        let rows = forecast_origins(self.test.len())
            .zip(pooled.iter().zip(&intervals).zip(&self.targets))
            .map(|(t, ((p, iv), target))| HourRow {
                t,
                timestamp: self.test.timestamp(t + 1).format(TIMESTAMP_FORMAT).to_string(),
                truth: self.truth[t + 1],
                mask: u8::from(target.is_none()),
                mean: p.mean,
                within_var: p.within_var,
                between_var: p.between_var,
                total_var: p.total_var,
                lower: iv.lower,
                upper: iv.upper,
                covered: target.map(|y| u8::from(iv.contains(y))),
            })
            .collect();
        Ok((report, rows))
    }
}

fn resolve_spec(model: &ModelConfig, data_series: &HourlySeries, seed: u64) -> Result<(RegressorSpec, usize)> {
    let data = build_training(data_series)?;
    let grid: Vec<RegressorSpec> = match &model.grid {
        Some(g) => g.iter().map(|h| RegressorSpec::new(h.clone(), seed)).collect(),
        None => default_grid(model.family, &data, seed),
    };
    Ok((tune_chronological(&grid, &data, model.folds)?, grid.len()))
}

/// Runs every cell of `config` in memory. `base` resolves relative CSV paths.
pub fn execute(config: &ExperimentConfig, base: Option<&Path>) -> Result<Experiment> {
    config.validate()?;
    let seeds = DerivedSeeds::new(config.seed);
    let series = config.data.load(base)?;
    let (train_full, test_full) = series.split_chronological(config.test_len)?;
    let reseed = |spec: &MissingSpec, stream: u64| match spec {
        MissingSpec::TargetFraction { seed, .. } => spec.reseeded(derive_seed(stream, &[*seed])),
        other => other.clone(),
    };
    let (train, _) = inject_missing(&train_full, &reseed(&config.train_missing, seeds.train_missing))?;
    let (test, _) = inject_missing(&test_full, &reseed(&config.test_missing, seeds.test_missing))?;
    let pipeline = Pipeline::with_sampler_k(train, test, config.sampler_k, seeds.imputation)?;
    let ctx = EvalContext {
        test: pipeline.test(),
        truth: test_full.power(),
        targets: forecast_targets(pipeline.test()),
        alpha: config.alpha,
        clip_normal_lower: config.clip_normal_lower,
    };

    let setups = config.unique_setups();
    let max_b = config.unique_b_values().last().copied().unwrap_or(1);
    let single_train = pipeline.single_train();
    let mut outcomes: BTreeMap<CellKey, std::result::Result<(EvalReport, Vec<HourRow>), String>> = BTreeMap::new();
    let mut models = Vec::new();
    for m in &config.models {
        let keys: Vec<CellKey> = cell_keys(config).into_iter().filter(|k| k.model == m.family).collect();
        let spec = match resolve_spec(m, &single_train, seeds.model(m.family)) {
            Ok((spec, candidates)) => {
                models.push(ModelManifest { family: m.family, candidates, resolved: Some(spec.clone()), error: None });
                spec
            }
            Err(e) => {
                let error = format!("tuning failed: {e}");
                models.push(ModelManifest { family: m.family, candidates: 0, resolved: None, error: Some(error.clone()) });
                for k in keys {
                    outcomes.insert(k, Err(error.clone()));
                }
                continue;
            }
        };

        let needs_single = setups.iter().any(|s| *s != Setup::MiTrainMiTest);
        let single = if needs_single { Some(FittedRound::train(&spec, &single_train)) } else { None };
        for &setup in &setups {
            let rounds = setup.effective_rounds(max_b);
            let forecasts: std::result::Result<Vec<RoundForecast>, String> = match (&single, setup) {
                (Some(Err(e)), s) if s != Setup::MiTrainMiTest => Err(e.to_string()),
                (Some(Ok(fitted)), s) => pipeline.forecasts(&spec, s, rounds, Some(fitted)).map_err(|e| e.to_string()),
                _ => pipeline.forecasts(&spec, setup, rounds, None).map_err(|e| e.to_string()),
            };
            for k in keys.iter().filter(|k| k.setup == setup) {
                let outcome = forecasts.as_ref().map_err(Clone::clone).and_then(|f| {
                    pool_forecasts(f, k.b)
                        .and_then(|pooled| ctx.cell(&pooled, k.interval_family))
                        .map_err(|e| e.to_string())
                });
                outcomes.insert(*k, outcome);
            }
        }
    }

    let mut tables = BTreeMap::new();
    let mut cells = Vec::new();
    for key in cell_keys(config) {
        let id = key.id();
        let status = match outcomes.remove(&key).expect("every cell evaluated") {
            Ok((report, rows)) => {
                let csv = format!("{}/{id}.csv", report::CELLS_DIR);
                tables.insert(id.clone(), rows);
                CellStatus::Ok { report, csv }
            }
            Err(error) => CellStatus::Failed { error },
        };
        cells.push(CellSummary { id, key, status });
    }

    let mut files = vec!["summary.json".to_string(), "manifest.json".to_string()];
    files.extend(tables.keys().map(|id| format!("{}/{id}.csv", report::CELLS_DIR)));
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        train_hours: pipeline.train().len(),
        test_hours: pipeline.test().len(),
        train_missing_fraction: missing_fraction(pipeline.train()),
        test_missing_fraction: missing_fraction(pipeline.test()),
        sampler_k: pipeline.sampler().k(),
        models,
        files,
    };
    Ok(Experiment {
        summary: Summary { schema_version: SUMMARY_SCHEMA_VERSION, alpha: config.alpha, cells },
        manifest,
        tables,
    })
}

impl Experiment {
    /// Writes the report files into `dir`, each one atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (id, rows) in &self.tables {
            let mut buf = Vec::new();
            report::write_rows(rows, &mut buf)?;
            report::write_atomic(&dir.join(report::CELLS_DIR).join(format!("{id}.csv")), &buf)?;
        }
        let mut manifest = serde_json::to_string_pretty(&self.manifest)?;
        manifest.push('\n');
        report::write_atomic(&dir.join("manifest.json"), manifest.as_bytes())?;
        report::write_atomic(&dir.join("summary.json"), self.summary.to_json()?.as_bytes())?;
        Ok(())
    }
}

/// Executes `config` and writes its report files into `config.output_dir`.
pub fn run(config: &ExperimentConfig, base: Option<&Path>) -> Result<(Summary, PathBuf)> {
    let experiment = execute(config, base)?;
    experiment.write(&config.output_dir)?;
    Ok((experiment.summary, config.output_dir.clone()))
}
