use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::imputation::KChoice;
use crate::intervals::IntervalFamily;
use crate::mi::Setup;
use crate::missingness::MissingSpec;
use crate::models::{Family, Hyperparams};
use crate::synth::SynthSpec;
use crate::timeseries::HourlySeries;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Where the hourly series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Path to a `timestamp,power,irradiance` CSV; relative paths resolve
    /// against the config file's directory.
    Csv(PathBuf),
    Synth(SynthSpec),
}

impl DataSource {
    pub fn load(&self, base: Option<&Path>) -> Result<HourlySeries> {
        match self {
            DataSource::Csv(path) => {
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let file = std::fs::File::open(&path)
                    .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
                HourlySeries::parse_csv(std::io::BufReader::new(file))
            }
            DataSource::Synth(spec) => spec.generate(),
        }
    }
}

fn default_folds() -> usize {
    5
}

/// One regressor family and its candidates. Without a grid the family's
/// default candidates are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Hyperparams>>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl ModelConfig {
    pub fn new(family: Family) -> Self {
        Self { family, grid: None, folds: default_folds() }
    }
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_setups() -> Vec<Setup> {
    Setup::ALL.to_vec()
}
fn default_b_values() -> Vec<usize> {
    vec![5, 10]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_models() -> Vec<ModelConfig> {
    [Family::Knn, Family::Lasso, Family::Mlp].into_iter().map(ModelConfig::new).collect()
}
fn default_families() -> Vec<IntervalFamily> {
    vec![IntervalFamily::Normal, IntervalFamily::Gamma]
}
fn default_sampler_k() -> KChoice {
    KChoice::Auto
}
fn default_missing() -> MissingSpec {
    MissingSpec::none()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub data: DataSource,
    /// Hours at the end of the series held out for testing.
    pub test_len: usize,
    #[serde(default = "default_missing")]
    pub train_missing: MissingSpec,
    #[serde(default = "default_missing")]
    pub test_missing: MissingSpec,
    #[serde(default = "default_setups")]
    pub setups: Vec<Setup>,
    #[serde(default = "default_b_values")]
    pub b_values: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_families")]
    pub interval_families: Vec<IntervalFamily>,
    #[serde(default = "default_sampler_k")]
    pub sampler_k: KChoice,
    /// Truncate negative normal lower bounds at zero in the reports.
    #[serde(default)]
    pub clip_normal_lower: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(data: DataSource, test_len: usize) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            data,
            test_len,
            train_missing: default_missing(),
            test_missing: default_missing(),
            setups: default_setups(),
            b_values: default_b_values(),
            alpha: default_alpha(),
            models: default_models(),
            interval_families: default_families(),
            sampler_k: default_sampler_k(),
            clip_normal_lower: false,
            seed: 0,
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return arg(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.setups.is_empty() || self.models.is_empty() || self.interval_families.is_empty() {
            return arg("config needs at least one setup, one model and one interval family");
        }
        let needs_b = self.setups.iter().any(|s| *s != Setup::SiTrainSiTest);
        if needs_b && (self.b_values.is_empty() || self.b_values.contains(&0)) {
            return arg("b_values must be a non-empty list of positive round counts");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return arg(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        for m in &self.models {
            if m.folds < 2 {
                return arg(format!("{}: folds must be at least 2", m.family));
            }
            if let Some(grid) = &m.grid {
                if grid.is_empty() {
                    return arg(format!("{}: grid must not be empty", m.family));
                }
                if let Some(h) = grid.iter().find(|h| h.family() != m.family) {
                    return arg(format!("{}: grid contains a {} candidate", m.family, h.family()));
                }
            }
        }
        let mut families: Vec<Family> = self.models.iter().map(|m| m.family).collect();
        families.sort();
        families.dedup();
        if families.len() != self.models.len() {
            return arg("each model family may appear only once");
        }
        Ok(())
    }

    /// Setups in ascending order without repeats.
    pub fn unique_setups(&self) -> Vec<Setup> {
        let mut v = self.setups.clone();
        v.sort();
        v.dedup();
        v
    }

    /// Distinct B values in ascending order.
    pub fn unique_b_values(&self) -> Vec<usize> {
        let mut v = self.b_values.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn unique_interval_families(&self) -> Vec<IntervalFamily> {
        let mut v = self.interval_families.clone();
        v.sort();
        v.dedup();
        v
    }
}
