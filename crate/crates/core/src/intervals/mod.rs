//! Central prediction intervals from a predictive mean and variance.

pub mod special;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

pub use special::{gamma_p, gamma_quantile, inverse_normal_cdf, ln_gamma, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalFamily {
    Normal,
    Gamma,
}

impl IntervalFamily {
    pub fn name(self) -> &'static str {
        match self {
            IntervalFamily::Normal => "normal",
            IntervalFamily::Gamma => "gamma",
        }
    }
}

impl fmt::Display for IntervalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal level `1 - alpha`.
    pub level: f64,
    pub family: IntervalFamily,
}

impl PredictionInterval {
    /// Closed-interval membership.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Lower bound truncated at zero; used for reporting non-negative power.
    pub fn clipped_at_zero(self) -> Self {
        Self { lower: self.lower.max(0.0), upper: self.upper.max(0.0), ..self }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        arg(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

/// `mean ± z_{1-alpha/2} · sqrt(variance)`.
pub fn normal_interval(mean: f64, variance: f64, alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if !(variance >= 0.0) {
        return arg(format!("variance must be non-negative, got {variance}"));
    }
    let half = inverse_normal_cdf(1.0 - alpha / 2.0)? * variance.sqrt();
    Ok(PredictionInterval {
        lower: mean - half,
        upper: mean + half,
        level: 1.0 - alpha,
        family: IntervalFamily::Normal,
    })
}

/// Moment-matched gamma `(shape, scale)` for a positive mean.
pub fn gamma_moments(mean: f64, variance: f64) -> (f64, f64) {
    (mean * mean / variance, variance / mean)
}

/// Central interval of the moment-matched gamma; `[0, 0]` when `mean <= 0`.
pub fn gamma_interval(mean: f64, variance: f64, alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if !(variance >= 0.0) {
        return arg(format!("variance must be non-negative, got {variance}"));
    }
    let level = 1.0 - alpha;
    let family = IntervalFamily::Gamma;
    if mean <= 0.0 {
        return Ok(PredictionInterval { lower: 0.0, upper: 0.0, level, family });
    }
    if variance == 0.0 {
        // zero-variance limit is a point mass at the mean
        return Ok(PredictionInterval { lower: mean, upper: mean, level, family });
    }
    let (shape, scale) = gamma_moments(mean, variance);
    let lower = gamma_quantile(alpha / 2.0, shape, scale)?;
    let upper = gamma_quantile(1.0 - alpha / 2.0, shape, scale)?;
    Ok(PredictionInterval { lower, upper, level, family })
}

pub fn interval(family: IntervalFamily, mean: f64, variance: f64, alpha: f64) -> Result<PredictionInterval> {
    match family {
        IntervalFamily::Normal => normal_interval(mean, variance, alpha),
        IntervalFamily::Gamma => gamma_interval(mean, variance, alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normal_examples() {
        let i = normal_interval(0.0, 1.0, 0.05).unwrap();
        assert!((i.lower + 1.96).abs() < 1e-3 && (i.upper - 1.96).abs() < 1e-3);
        let i = normal_interval(3.0, 0.0, 0.05).unwrap();
        assert_eq!((i.lower, i.upper), (3.0, 3.0));
        let i = normal_interval(10.0, 4.0, 0.05).unwrap();
        assert!((i.lower - (10.0 - 1.95996 * 2.0)).abs() < 1e-4);
        assert!((i.upper - (10.0 + 1.95996 * 2.0)).abs() < 1e-4);
        assert!(normal_interval(0.0, 1.0, 1.0).is_err());
        assert!(normal_interval(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_interval(-0.3, 2.0, 0.05).unwrap().upper, 0.0);
        assert_eq!(gamma_interval(0.0, 2.0, 0.05).unwrap().lower, 0.0);
        assert_eq!(gamma_moments(4.0, 4.0), (4.0, 1.0));
        let i = gamma_interval(1.0, 1.0, 0.5).unwrap();
        assert!((i.lower - 0.287_682_072_451_781).abs() < 1e-8, "{}", i.lower);
        assert!((i.upper - 1.386_294_361_119_890_6).abs() < 1e-8, "{}", i.upper);
        assert!(gamma_interval(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn clipping_and_membership() {
        let i = normal_interval(0.1, 1.0, 0.05).unwrap();
        assert!(i.lower < 0.0);
        let c = i.clipped_at_zero();
        assert_eq!(c.lower, 0.0);
        assert!(c.contains(0.0) && c.contains(c.upper) && !c.contains(c.upper + 1e-9));
    }

    proptest! {
        #[test]
        fn normal_is_symmetric(mean in -100.0f64..100.0, var in 0.0f64..1e4, alpha in 0.001f64..0.999) {
            let i = normal_interval(mean, var, alpha).unwrap();
            let (lo, hi) = (mean - i.lower, i.upper - mean);
            prop_assert!((lo - hi).abs() <= 1e-12 * (1.0 + mean.abs() + hi.abs()));
            prop_assert!(i.lower <= i.upper);
        }

        #[test]
        fn gamma_lower_is_non_negative(mean in -5.0f64..50.0, var in 1e-6f64..100.0, alpha in 0.001f64..0.999) {
            let i = gamma_interval(mean, var, alpha).unwrap();
            prop_assert!(i.lower >= 0.0 && i.lower <= i.upper);
        }

        #[test]
        fn wider_level_never_narrows(mean in 0.01f64..50.0, var in 1e-4f64..100.0, a1 in 0.01f64..0.5, shrink in 0.1f64..0.99) {
            let a2 = a1 * shrink;
            for fam in [IntervalFamily::Normal, IntervalFamily::Gamma] {
                let i1 = interval(fam, mean, var, a1).unwrap();
                let i2 = interval(fam, mean, var, a2).unwrap();
                prop_assert!(i2.lower <= i1.lower + 1e-12 && i2.upper >= i1.upper - 1e-12, "{fam}");
            }
        }

        #[test]
        fn moment_matching_round_trip(mean in 1e-3f64..1e3, var in 1e-6f64..1e3) {
            let (a, b) = gamma_moments(mean, var);
            prop_assert!(((a * b) - mean).abs() <= 1e-12 * mean);
            prop_assert!(((a * b * b) - var).abs() <= 1e-12 * var);
        }
    }
}
