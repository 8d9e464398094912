//! Synthetic PV-like hourly data with a known `Pr(P | I)`.
//!
//! Irradiance follows a half-sine between 06:00 and 18:00 scaled by a daily
//! cloudiness factor drawn from `U[0.3, 1]`. Power is
//! `max(0, efficiency * I * (1 + eps))` with `eps ~ N(0, noise_scale^2)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::intervals::normal_cdf;
use crate::rng;
use crate::timeseries::{default_start_time, HourlySeries};

pub const SUNRISE_HOUR: f64 = 6.0;
pub const SUNSET_HOUR: f64 = 18.0;
pub const CLOUDINESS_RANGE: (f64, f64) = (0.3, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub days: usize,
    /// kW/m².
    pub peak_irradiance: f64,
    /// kWh per kW/m².
    pub efficiency: f64,
    /// Standard deviation of the relative noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { days: 365, peak_irradiance: 1.0, efficiency: 5.0, noise_scale: 0.15, seed: 0 }
    }
}

/// Clear-sky shape in `[0, 1]` for an hour of the day.
pub fn clear_sky(hour_of_day: usize) -> f64 {
    let h = hour_of_day as f64;
    if h <= SUNRISE_HOUR || h >= SUNSET_HOUR {
        0.0
    } else {
        (std::f64::consts::PI * (h - SUNRISE_HOUR) / (SUNSET_HOUR - SUNRISE_HOUR)).sin()
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.days < 3 {
            return arg(format!("synthetic data needs at least 3 days, got {}", self.days));
        }
        let positive = self.peak_irradiance > 0.0 && self.efficiency > 0.0;
        if !positive || !self.peak_irradiance.is_finite() || !self.efficiency.is_finite() {
            return arg("peak_irradiance and efficiency must be positive and finite");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return arg(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        self.days * 24
    }

    /// One draw from the true conditional distribution of power.
    pub fn sample_power<R: Rng + ?Sized>(&self, irradiance: f64, rng: &mut R) -> f64 {
        let eps: f64 = rng.sample(StandardNormal);
        (self.efficiency * irradiance * (1.0 + self.noise_scale * eps)).max(0.0)
    }

    pub fn generate(&self) -> Result<HourlySeries> {
        self.validate()?;
        let mut r = rng::stream(self.seed, rng::label_id("synth"));
        let mut power = Vec::with_capacity(self.hours());
        let mut irradiance = Vec::with_capacity(self.hours());
        let (lo, hi) = CLOUDINESS_RANGE;
        for _ in 0..self.days {
            let cloud = r.gen_range(lo..=hi);
            for h in 0..24 {
                let irr = self.peak_irradiance * cloud * clear_sky(h);
                irradiance.push(irr);
                power.push(self.sample_power(irr, &mut r));
            }
        }
        HourlySeries::from_observed(default_start_time(), power, irradiance)
    }

    /// Exact CDF of power given irradiance, including the point mass at zero.
    pub fn true_conditional_cdf(&self, irradiance: f64, x: f64) -> f64 {
        let mu = self.efficiency * irradiance;
        let sd = self.noise_scale * mu;
        if x < 0.0 {
            0.0
        } else if sd <= 0.0 {
            if x >= mu { 1.0 } else { 0.0 }
        } else {
            normal_cdf((x - mu) / sd)
        }
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous-or-mixed CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        // the empirical CDF jumps from i/n to j/n at x; the left limit of `cdf` is
        // approximated by its value just below x
        let f_left = cdf(x - x.abs().max(1.0) * 1e-12);
        d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - f_left).abs());
        i = j;
    }
    d
}
