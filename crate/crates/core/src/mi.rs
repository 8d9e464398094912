//! Imputation rounds and Rubin pooling.
//!
//! Round `b` completes the training and/or test series with its own
//! deterministic random stream, trains (or reuses) a regressor, and yields a
//! predictive mean per test hour together with the training residual variance.
//! Rounds are pooled per hour after all of them have finished.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::features::{build_test_input, build_training, forecast_origins, INPUT_DIM};
use crate::imputation::{complete_series, fit_sampler, ConditionalSampler, ImputationMode, KChoice};
use crate::models::{fit, residual_variance, RegressorSpec, TrainedModel};
use crate::rng;
use crate::timeseries::HourlySeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundPrediction {
    /// 1-based round index.
    pub round: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledPrediction {
    pub mean: f64,
    pub within_var: f64,
    pub between_var: f64,
    pub total_var: f64,
    pub rounds: usize,
}

/// Pooled mean, within- and between-round variance, and
/// `total = WV + (1 + 1/B) BV`. With one round `BV = 0` and `total = WV`.
pub fn rubin_pool(rounds: &[RoundPrediction]) -> Result<PooledPrediction> {
    if rounds.is_empty() {
        return arg("cannot pool an empty set of rounds");
    }
    if let Some(r) = rounds.iter().find(|r| !(r.variance >= 0.0) || !r.mean.is_finite()) {
        return arg(format!("round {} has mean {} and variance {}", r.round, r.mean, r.variance));
    }
    let b = rounds.len() as f64;
    let mean = rounds.iter().map(|r| r.mean).sum::<f64>() / b;
    let within_var = rounds.iter().map(|r| r.variance).sum::<f64>() / b;
    let between_var = if rounds.len() == 1 {
        0.0
    } else {
        rounds.iter().map(|r| (r.mean - mean).powi(2)).sum::<f64>() / (b - 1.0)
    };
    Ok(PooledPrediction {
        mean,
        within_var,
        between_var,
        total_var: within_var + (1.0 + 1.0 / b) * between_var,
        rounds: rounds.len(),
    })
}

/// Imputation setting for training data and test inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setup {
    /// Single imputation of both; one round.
    SiTrainSiTest,
    /// One single-imputed training set, stochastic test completions.
    SiTrainMiTest,
    /// Stochastic completions of both, one model per round.
    MiTrainMiTest,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::SiTrainSiTest, Setup::SiTrainMiTest, Setup::MiTrainMiTest];

    pub fn number(self) -> u8 {
        match self {
            Setup::SiTrainSiTest => 1,
            Setup::SiTrainMiTest => 2,
            Setup::MiTrainMiTest => 3,
        }
    }

    /// Rounds actually used for a requested `b`.
    pub fn effective_rounds(self, b: usize) -> usize {
        match self {
            Setup::SiTrainSiTest => 1,
            _ => b,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Setup::SiTrainSiTest => "SI train, SI test",
            Setup::SiTrainMiTest => "SI train, MI test",
            Setup::MiTrainMiTest => "MI train, MI test",
        }
    }
}

impl TryFrom<u8> for Setup {
    type Error = String;
    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            1 => Ok(Setup::SiTrainSiTest),
            2 => Ok(Setup::SiTrainMiTest),
            3 => Ok(Setup::MiTrainMiTest),
            _ => Err(format!("setup must be 1, 2 or 3, got {n}")),
        }
    }
}

impl From<Setup> for u8 {
    fn from(s: Setup) -> u8 {
        s.number()
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

const TRAIN_STREAM: &str = "train-completion";
const TEST_STREAM: &str = "test-completion";

/// One round's predictions for every test forecast origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundForecast {
    pub round: usize,
    pub means: Vec<f64>,
    pub variance: f64,
}

/// A model trained on one completed training series with its residual variance.
#[derive(Debug, Clone)]
pub struct FittedRound {
    pub model: TrainedModel,
    pub variance: f64,
}

impl FittedRound {
    pub fn train(spec: &RegressorSpec, completed_train: &HourlySeries) -> Result<Self> {
        let data = build_training(completed_train)?;
        let model = fit(spec, &data)?;
        let variance = residual_variance(&model, &data)?;
        Ok(Self { model, variance })
    }

    fn forecast(&self, round: usize, completed_test: &HourlySeries) -> Result<RoundForecast> {
        let inputs = test_inputs(completed_test)?;
        Ok(RoundForecast { round, means: self.model.predict_batch(&inputs), variance: self.variance })
    }
}

fn test_inputs(completed: &HourlySeries) -> Result<Vec<[f64; INPUT_DIM]>> {
    forecast_origins(completed.len()).map(|t| build_test_input(completed, t)).collect()
}

/// Train/test pair with a sampler fitted on the observed training hours.
///
/// Completions are deterministic functions of `(seed, round)`: the training
/// and test completions of round `b` use separate streams, so round `b` is the
/// same whatever the total number of rounds.
#[derive(Debug, Clone)]
pub struct Pipeline {
    train: HourlySeries,
    test: HourlySeries,
    sampler: ConditionalSampler,
    seed: u64,
}

impl Pipeline {
    pub fn new(train: HourlySeries, test: HourlySeries, sampler: ConditionalSampler, seed: u64) -> Result<Self> {
        if test.len() < INPUT_DIM / 2 + 1 {
            return Err(Error::InsufficientData(format!(
                "test series of {} hours has no forecast origin",
                test.len()
            )));
        }
        Ok(Self { train, test, sampler, seed })
    }

    /// Fits the sampler on `train` with the given neighbour choice.
    pub fn with_sampler_k(train: HourlySeries, test: HourlySeries, k: KChoice, seed: u64) -> Result<Self> {
        let sampler = fit_sampler(&train, k)?;
        Self::new(train, test, sampler, seed)
    }

    pub fn sampler(&self) -> &ConditionalSampler {
        &self.sampler
    }

    pub fn train(&self) -> &HourlySeries {
        &self.train
    }

    pub fn test(&self) -> &HourlySeries {
        &self.test
    }

    pub fn origins(&self) -> std::ops::Range<usize> {
        forecast_origins(self.test.len())
    }

    fn completion(&self, series: &HourlySeries, mode: ImputationMode, label: &str, round: usize) -> HourlySeries {
        let mut r = rng::stream(rng::derive_seed(self.seed, &[rng::label_id(label)]), round as u64);
        complete_series(series, &self.sampler, mode, &mut r)
    }

    pub fn single_train(&self) -> HourlySeries {
        self.completion(&self.train, ImputationMode::Single, TRAIN_STREAM, 0)
    }

    pub fn single_test(&self) -> HourlySeries {
        self.completion(&self.test, ImputationMode::Single, TEST_STREAM, 0)
    }

    pub fn stochastic_train(&self, round: usize) -> HourlySeries {
        self.completion(&self.train, ImputationMode::Stochastic, TRAIN_STREAM, round)
    }

    pub fn stochastic_test(&self, round: usize) -> HourlySeries {
        self.completion(&self.test, ImputationMode::Stochastic, TEST_STREAM, round)
    }

    /// Model on the single-imputed training series, shared by setups 1 and 2.
    pub fn fit_single(&self, spec: &RegressorSpec) -> Result<FittedRound> {
        FittedRound::train(spec, &self.single_train())
    }

    /// Per-round forecasts for rounds `1..=rounds` (a single round for setup 1).
    /// `single` reuses an already fitted single-imputation model.
    pub fn forecasts(
        &self,
        spec: &RegressorSpec,
        setup: Setup,
        rounds: usize,
        single: Option<&FittedRound>,
    ) -> Result<Vec<RoundForecast>> {
        if rounds == 0 {
            return arg("number of imputation rounds must be at least 1");
        }
        let owned;
        let single = match (setup, single) {
            (Setup::MiTrainMiTest, _) => None,
            (_, Some(s)) => Some(s),
            (_, None) => {
                owned = self.fit_single(spec)?;
                Some(&owned)
            }
        };
        match setup {
            Setup::SiTrainSiTest => Ok(vec![single.expect("fitted").forecast(1, &self.single_test())?]),
            Setup::SiTrainMiTest => {
                let model = single.expect("fitted");
                (1..=rounds).map(|b| model.forecast(b, &self.stochastic_test(b))).collect()
            }
            Setup::MiTrainMiTest => (1..=rounds)
                .into_par_iter()
                .map(|b| FittedRound::train(spec, &self.stochastic_train(b))?.forecast(b, &self.stochastic_test(b)))
                .collect(),
        }
    }
}

/// Pools the first `rounds` forecasts hour by hour.
pub fn pool_forecasts(forecasts: &[RoundForecast], rounds: usize) -> Result<Vec<PooledPrediction>> {
    let used = forecasts.get(..rounds).filter(|f| !f.is_empty()).ok_or_else(|| {
        Error::Argument(format!("requested {rounds} rounds but {} are available", forecasts.len()))
    })?;
    let hours = used[0].means.len();
    if used.iter().any(|f| f.means.len() != hours) {
        return arg("rounds disagree on the number of test hours");
    }
    (0..hours)
        .map(|h| {
            let per_round: Vec<RoundPrediction> = used
                .iter()
                .map(|f| RoundPrediction { round: f.round, mean: f.means[h], variance: f.variance })
                .collect();
            rubin_pool(&per_round)
        })
        .collect()
}

/// Pooled prediction for each test forecast origin `t = 23..=T'-2`.
///
/// The sampler is fitted once on the observed training hours with an
/// automatically selected `k` and reused for train and test completions.
pub fn run_pipeline(
    train: &HourlySeries,
    test: &HourlySeries,
    spec: &RegressorSpec,
    setup: Setup,
    rounds: usize,
    seed: u64,
) -> Result<Vec<PooledPrediction>> {
    let pipeline = Pipeline::with_sampler_k(train.clone(), test.clone(), KChoice::Auto, seed)?;
    let rounds = setup.effective_rounds(rounds);
    let forecasts = pipeline.forecasts(spec, setup, rounds, None)?;
    pool_forecasts(&forecasts, rounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missingness::{inject_missing, MissingSpec};
    use crate::synth::SynthSpec;
    use proptest::prelude::*;

    fn rp(round: usize, mean: f64, variance: f64) -> RoundPrediction {
        RoundPrediction { round, mean, variance }
    }

    #[test]
    fn pooling_examples() {
        let p = rubin_pool(&[rp(1, 2.0, 1.0), rp(2, 2.0, 1.0), rp(3, 2.0, 1.0)]).unwrap();
        assert_eq!((p.mean, p.within_var, p.between_var, p.total_var), (2.0, 1.0, 0.0, 1.0));
        let p = rubin_pool(&[rp(1, 1.0, 0.5), rp(2, 3.0, 0.5)]).unwrap();
        assert_eq!((p.mean, p.within_var, p.between_var, p.total_var), (2.0, 0.5, 2.0, 3.5));
        let p = rubin_pool(&[rp(1, 7.0, 0.25)]).unwrap();
        assert_eq!((p.between_var, p.total_var, p.rounds), (0.0, 0.25, 1));
        assert!(matches!(rubin_pool(&[]), Err(Error::Argument(_))));
        assert!(rubin_pool(&[rp(1, 0.0, -1.0)]).is_err());
    }

    #[test]
    fn setup_serializes_as_its_number() {
        assert_eq!(serde_json::to_string(&Setup::SiTrainMiTest).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Setup>("3").unwrap(), Setup::MiTrainMiTest);
        assert!(serde_json::from_str::<Setup>("4").is_err());
        assert_eq!(Setup::SiTrainSiTest.effective_rounds(10), 1);
    }

    fn rounds_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-50.0f64..50.0, 0.0f64..20.0), 1..=10)
    }

    proptest! {
        #[test]
        fn total_variance_decomposes(rs in rounds_strategy()) {
            let rounds: Vec<_> = rs.iter().enumerate().map(|(i, &(m, v))| rp(i + 1, m, v)).collect();
            let p = rubin_pool(&rounds).unwrap();
            let b = rounds.len() as f64;
            let expected = p.within_var + (1.0 + 1.0 / b) * p.between_var;
            prop_assert!((p.total_var - expected).abs() <= 1e-12 * expected.abs().max(f64::MIN_POSITIVE));
            prop_assert!(p.total_var >= p.within_var && p.between_var >= 0.0);
        }

        #[test]
        fn pooling_ignores_round_order(rs in rounds_strategy(), rot in 0usize..10) {
            let rounds: Vec<_> = rs.iter().enumerate().map(|(i, &(m, v))| rp(i + 1, m, v)).collect();
            let mut permuted = rounds.clone();
            permuted.reverse();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            let (a, b) = (rubin_pool(&rounds).unwrap(), rubin_pool(&permuted).unwrap());
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
            prop_assert!(close(a.mean, b.mean) && close(a.within_var, b.within_var));
            prop_assert!(close(a.between_var, b.between_var) && close(a.total_var, b.total_var));
        }

        #[test]
        fn spread_never_lowers_total(rs in rounds_strategy(), scale in 1.0f64..5.0) {
            prop_assume!(rs.len() >= 2);
            let rounds: Vec<_> = rs.iter().enumerate().map(|(i, &(m, v))| rp(i + 1, m, v)).collect();
            let centre = rounds.iter().map(|r| r.mean).sum::<f64>() / rounds.len() as f64;
            let wider: Vec<_> = rounds.iter().map(|r| rp(r.round, centre + scale * (r.mean - centre), r.variance)).collect();
            let (a, b) = (rubin_pool(&rounds).unwrap(), rubin_pool(&wider).unwrap());
            prop_assert!(b.total_var >= a.total_var - 1e-9 * (1.0 + a.total_var));
        }
    }

    fn small_split(missing: f64) -> (HourlySeries, HourlySeries) {
        let series = SynthSpec { days: 30, ..SynthSpec::default() }.generate().unwrap();
        let (train, test) = series.split_chronological(240).unwrap();
        let spec = MissingSpec::TargetFraction { target_fraction: missing, block_len_hours: 12, seed: 3 };
        if missing == 0.0 {
            return (train, test);
        }
        let (train, _) = inject_missing(&train, &spec).unwrap();
        let (test, _) = inject_missing(&test, &spec.reseeded(4)).unwrap();
        (train, test)
    }

    #[test]
    fn complete_data_collapses_every_setup() {
        let (train, test) = small_split(0.0);
        let spec = RegressorSpec::knn(5);
        let reference = {
            let data = build_training(&train).unwrap();
            let m = fit(&spec, &data).unwrap();
            let v = residual_variance(&m, &data).unwrap();
            let inputs = test_inputs(&test).unwrap();
            (m.predict_batch(&inputs), v)
        };
        for setup in Setup::ALL {
            let pooled = run_pipeline(&train, &test, &spec, setup, 4, 11).unwrap();
            assert_eq!(pooled.len(), test.len() - 24);
            for (p, m) in pooled.iter().zip(&reference.0) {
                assert_eq!(p.between_var, 0.0);
                assert!((p.mean - m).abs() < 1e-12);
                assert!((p.total_var - reference.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn between_variance_appears_only_where_windows_were_imputed() {
        let (train, test) = small_split(0.3);
        let pooled = run_pipeline(&train, &test, &RegressorSpec::knn(5), Setup::SiTrainMiTest, 5, 2).unwrap();
        let origins = forecast_origins(test.len());
        let mut spread = 0;
        for (p, t) in pooled.iter().zip(origins) {
            let touched = (t + 1 - 24..=t).any(|h| test.is_missing(h));
            if !touched {
                assert_eq!(p.between_var, 0.0, "origin {t}");
            } else if p.between_var > 0.0 {
                spread += 1;
            }
        }
        assert!(spread > 0);
    }

    #[test]
    fn rounds_are_reproducible_and_prefix_stable() {
        let (train, test) = small_split(0.3);
        let p = Pipeline::with_sampler_k(train, test, KChoice::Auto, 9).unwrap();
        let spec = RegressorSpec::lasso(0.01);
        let a = p.forecasts(&spec, Setup::MiTrainMiTest, 4, None).unwrap();
        let b = p.forecasts(&spec, Setup::MiTrainMiTest, 2, None).unwrap();
        assert_eq!(&a[..2], &b[..]);
        assert_eq!(p.stochastic_test(3), p.stochastic_test(3));
        assert_ne!(p.stochastic_test(1), p.stochastic_test(2));
    }

    #[test]
    fn multiple_imputation_widens_intervals() {
        let (train, test) = small_split(0.3);
        let spec = RegressorSpec::knn(5);
        let mean_total = |setup| {
            let pooled = run_pipeline(&train, &test, &spec, setup, 5, 1).unwrap();
            pooled.iter().map(|p| p.total_var).sum::<f64>() / pooled.len() as f64
        };
        assert!(mean_total(Setup::MiTrainMiTest) > mean_total(Setup::SiTrainSiTest));
    }
}
