//! Block-wise removal of power observations with retained ground truth.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::rng;
use crate::timeseries::HourlySeries;

pub const DEFAULT_BLOCK_LEN_HOURS: usize = 168;

/// A contiguous run of hours `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block(pub usize, pub usize);

impl Block {
    pub fn start(&self) -> usize {
        self.0
    }
    pub fn len(&self) -> usize {
        self.1
    }
    pub fn is_empty(&self) -> bool {
        self.1 == 0
    }
    pub fn end(&self) -> usize {
        self.0 + self.1
    }
}

/// How power observations are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MissingSpec {
    ExplicitBlocks { blocks: Vec<Block> },
    TargetFraction {
        target_fraction: f64,
        #[serde(default = "default_block_len")]
        block_len_hours: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_block_len() -> usize {
    DEFAULT_BLOCK_LEN_HOURS
}

impl MissingSpec {
    pub fn none() -> Self {
        MissingSpec::ExplicitBlocks { blocks: Vec::new() }
    }

    pub fn fraction(target_fraction: f64, seed: u64) -> Self {
        MissingSpec::TargetFraction {
            target_fraction,
            block_len_hours: DEFAULT_BLOCK_LEN_HOURS,
            seed,
        }
    }

    /// Same spec with a different RNG seed (no-op for explicit blocks).
    pub fn reseeded(&self, new_seed: u64) -> Self {
        match self {
            MissingSpec::TargetFraction { target_fraction, block_len_hours, .. } => MissingSpec::TargetFraction {
                target_fraction: *target_fraction,
                block_len_hours: *block_len_hours,
                seed: new_seed,
            },
            other => other.clone(),
        }
    }
}

/// Power values removed by [`inject_missing`], keyed by hour index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub removed: BTreeMap<usize, f64>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    /// Puts the removed values back.
    pub fn restore(&self, series: &HourlySeries) -> Result<HourlySeries> {
        let mut power = series.power().to_vec();
        for (&t, &v) in &self.removed {
            if t >= power.len() {
                return arg(format!("ground truth index {t} beyond series length {}", power.len()));
            }
            power[t] = Some(v);
        }
        series.with_power(power)
    }
}

/// Fraction of hours whose power is missing.
pub fn missing_fraction(series: &HourlySeries) -> f64 {
    series.missing_count() as f64 / series.len() as f64
}

/// Masks power according to `spec`; irradiance is untouched.
pub fn inject_missing(series: &HourlySeries, spec: &MissingSpec) -> Result<(HourlySeries, GroundTruth)> {
    let blocks = match spec {
        MissingSpec::ExplicitBlocks { blocks } => {
            validate_explicit(series, blocks)?;
            blocks.clone()
        }
        MissingSpec::TargetFraction { target_fraction, block_len_hours, seed } => {
            place_blocks(series, *target_fraction, *block_len_hours, *seed)?
        }
    };

    let mut power = series.power().to_vec();
    let mut truth = GroundTruth::default();
    for block in &blocks {
        for t in block.start()..block.end() {
            if let Some(v) = power[t].take() {
                truth.removed.insert(t, v);
            }
        }
    }
    Ok((series.with_power(power)?, truth))
}

fn validate_explicit(series: &HourlySeries, blocks: &[Block]) -> Result<()> {
    let mut sorted: Vec<Block> = blocks.to_vec();
    sorted.sort_by_key(|b| b.start());
    for b in &sorted {
        if b.is_empty() {
            return arg(format!("block starting at {} has zero length", b.start()));
        }
        if b.end() > series.len() {
            return arg(format!(
                "block [{}, {}) exceeds series length {}",
                b.start(),
                b.end(),
                series.len()
            ));
        }
        if let Some(t) = (b.start()..b.end()).find(|&t| series.is_missing(t)) {
            return arg(format!("hour {t} in block is already missing"));
        }
    }
    for w in sorted.windows(2) {
        if w[1].start() < w[0].end() {
            return arg(format!(
                "blocks [{}, {}) and [{}, {}) overlap",
                w[0].start(),
                w[0].end(),
                w[1].start(),
                w[1].end()
            ));
        }
    }
    Ok(())
}

/// Places separated blocks at uniform admissible starts until
/// `ceil(target * T)` hours are missing; the last block is trimmed.
fn place_blocks(series: &HourlySeries, target: f64, block_len: usize, seed: u64) -> Result<Vec<Block>> {
    if !(0.0..1.0).contains(&target) {
        return arg(format!("target fraction {target} must lie in [0, 1)"));
    }
    if block_len == 0 {
        return arg("block length must be positive");
    }
    let n = series.len();
    let needed = (target * n as f64).ceil() as usize;
    let mut missing = series.mask();
    let mut remaining = needed.saturating_sub(series.missing_count());
    let mut rng = rng::stream(seed, 0);
    let mut blocks = Vec::new();

    while remaining > 0 {
        let len = remaining.min(block_len);
        let starts = admissible_starts(&missing, len);
        if starts.is_empty() {
            return arg(format!(
                "cannot reach missing fraction {target}: no room for another {len}-hour block"
            ));
        }
        let s = starts[rng.gen_range(0..starts.len())];
        missing[s..s + len].iter_mut().for_each(|m| *m = true);
        blocks.push(Block(s, len));
        remaining -= len;
    }
    blocks.sort_by_key(|b| b.start());
    Ok(blocks)
}

/// Starts of `len`-hour fully observed windows that also have an observed
/// (or boundary) hour on each side, so injected runs never merge.
fn admissible_starts(missing: &[bool], len: usize) -> Vec<usize> {
    let n = missing.len();
    if len > n {
        return Vec::new();
    }
    // run[s] = number of consecutive observed hours starting at s
    let mut run = vec![0usize; n + 1];
    for s in (0..n).rev() {
        run[s] = if missing[s] { 0 } else { run[s + 1] + 1 };
    }
    (0..=n - len)
        .filter(|&s| {
            run[s] >= len && (s == 0 || !missing[s - 1]) && (s + len == n || !missing[s + len])
        })
        .collect()
}
