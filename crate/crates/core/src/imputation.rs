//! Imputation of missing power from same-hour irradiance.
//!
//! The conditional distribution `Pr(P | I)` is approximated by the empirical
//! distribution of the observed powers at the `k` nearest irradiance values.
//! Single imputation takes its mean, stochastic imputation draws from it.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::HourlySeries;

/// Candidate neighbour counts for automatic selection (clipped to `[1, n-1]`).
pub const DEFAULT_K_GRID: [usize; 10] = [1, 2, 3, 5, 8, 13, 21, 34, 55, 89];

/// Neighbour count: fixed, or chosen by leave-one-out error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KRepr", into = "KRepr")]
pub enum KChoice {
    Fixed(usize),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KRepr {
    Count(usize),
    Label(String),
}

impl TryFrom<KRepr> for KChoice {
    type Error = String;
    fn try_from(r: KRepr) -> std::result::Result<Self, String> {
        match r {
            KRepr::Count(0) => Err("k must be positive".into()),
            KRepr::Count(k) => Ok(KChoice::Fixed(k)),
            KRepr::Label(s) if s.eq_ignore_ascii_case("auto") => Ok(KChoice::Auto),
            KRepr::Label(s) => Err(format!("expected a positive count or \"auto\", got {s:?}")),
        }
    }
}

impl From<KChoice> for KRepr {
    fn from(k: KChoice) -> Self {
        match k {
            KChoice::Fixed(k) => KRepr::Count(k),
            KChoice::Auto => KRepr::Label("auto".into()),
        }
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Fixed(k) => write!(f, "{k}"),
            KChoice::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationMode {
    /// kNN mean.
    Single,
    /// One draw from the kNN empirical conditional distribution.
    Stochastic,
}

/// Observed `(irradiance, power)` pairs sorted by irradiance, with a neighbour count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSampler {
    pairs: Vec<(f64, f64)>,
    k: usize,
}

impl ConditionalSampler {
    /// Builds a sampler from pairs in any order; `k` is clamped to `[1, n]`.
    pub fn new(mut pairs: Vec<(f64, f64)>, k: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InsufficientData("sampler needs at least one observed pair".into()));
        }
        // stable: equal irradiances keep chronological order
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = k.clamp(1, pairs.len());
        Ok(Self { pairs, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Indices (into [`pairs`](Self::pairs)) of the `k` nearest irradiances,
    /// ascending. Ties in distance go to the smaller index.
    pub fn neighbors(&self, irradiance: f64) -> Vec<usize> {
        let mut idx = ordered_neighbors(&self.pairs, irradiance, self.k, None);
        idx.sort_unstable();
        idx
    }

    /// One power value drawn uniformly from the neighbours' powers.
    pub fn sample_power<R: Rng + ?Sized>(&self, irradiance: f64, rng: &mut R) -> f64 {
        let nb = ordered_neighbors(&self.pairs, irradiance, self.k, None);
        self.pairs[nb[rng.gen_range(0..nb.len())]].1
    }

    /// Mean power of the neighbours.
    pub fn mean_power(&self, irradiance: f64) -> f64 {
        let nb = ordered_neighbors(&self.pairs, irradiance, self.k, None);
        nb.iter().map(|&i| self.pairs[i].1).sum::<f64>() / nb.len() as f64
    }
}

/// Fits a sampler on the observed hours of `train`.
pub fn fit_sampler(train: &HourlySeries, k: KChoice) -> Result<ConditionalSampler> {
    let pairs = train.observed_pairs();
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "sampler needs at least 2 observed pairs, found {}",
            pairs.len()
        )));
    }
    let k = match k {
        KChoice::Fixed(k) => k,
        KChoice::Auto if pairs.len() < 3 => 1,
        KChoice::Auto => {
            let grid: Vec<usize> = DEFAULT_K_GRID.iter().copied().filter(|&k| k < pairs.len()).collect();
            select_k(&pairs, &grid)?
        }
    };
    ConditionalSampler::new(pairs, k)
}

/// Grid value with the smallest leave-one-out squared error of the kNN mean;
/// ties go to the smaller `k`.
pub fn select_k(pairs: &[(f64, f64)], grid: &[usize]) -> Result<usize> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData("k selection needs at least 3 pairs".into()));
    }
    if grid.is_empty() || grid.iter().any(|&k| k == 0 || k >= pairs.len()) {
        return Err(Error::Argument(format!(
            "k grid must be non-empty with values in [1, {}]",
            pairs.len() - 1
        )));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k_max = *grid.iter().max().expect("non-empty");

    let mut sse = vec![0.0; k_max + 1];
    for (i, &(irr, p)) in sorted.iter().enumerate() {
        let nb = ordered_neighbors(&sorted, irr, k_max, Some(i));
        let mut sum = 0.0;
        for (j, &n) in nb.iter().enumerate() {
            sum += sorted[n].1;
            let err = sum / (j + 1) as f64 - p;
            sse[j + 1] += err * err;
        }
    }
    let mut best = grid[0];
    for &k in grid {
        if sse[k] < sse[best] || (sse[k] == sse[best] && k < best) {
            best = k;
        }
    }
    Ok(best)
}

/// Fills every missing hour of `series` from the sampler at its own irradiance.
pub fn complete_series<R: Rng + ?Sized>(
    series: &HourlySeries,
    sampler: &ConditionalSampler,
    mode: ImputationMode,
    rng: &mut R,
) -> HourlySeries {
    let power = series
        .power()
        .iter()
        .zip(series.irradiance())
        .map(|(p, &irr)| {
            Some(p.unwrap_or_else(|| match mode {
                ImputationMode::Single => sampler.mean_power(irr),
                ImputationMode::Stochastic => sampler.sample_power(irr, rng),
            }))
        })
        .collect();
    series
        .with_power(power)
        .expect("imputed values are drawn from observed non-negative powers")
}

/// First `m` indices of `sorted` ordered by `(|irradiance - q|, index)`,
/// skipping `exclude`. `sorted` must be ascending in irradiance.
pub(crate) fn ordered_neighbors(sorted: &[(f64, f64)], q: f64, m: usize, exclude: Option<usize>) -> Vec<usize> {
    let n = sorted.len();
    let m = m.min(n - usize::from(exclude.is_some_and(|e| e < n)));
    let mut out = Vec::with_capacity(m);
    let split = sorted.partition_point(|p| p.0 < q);
    // left walks down from split-1, right walks up from split
    let mut left = split;
    let mut right = split;
    let skip = |i: usize| Some(i) == exclude;

    let mut group = Vec::new();
    while out.len() < m {
        while left > 0 && skip(left - 1) {
            left -= 1;
        }
        while right < n && skip(right) {
            right += 1;
        }
        let dl = (left > 0).then(|| q - sorted[left - 1].0);
        let dr = (right < n).then(|| sorted[right].0 - q);
        let take_left = match (dl, dr) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_left {
            // the whole equal-distance group on the left, emitted by ascending index
            let d = dl.expect("checked");
            group.clear();
            while left > 0 && (skip(left - 1) || q - sorted[left - 1].0 == d) {
                if !skip(left - 1) {
                    group.push(left - 1);
                }
                left -= 1;
            }
            group.reverse();
            out.extend(group.iter().copied().take(m - out.len()));
        } else {
            out.push(right);
            right += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::timeseries::default_start_time;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// (distance, index) order by exhaustive sort.
    fn brute_order(sorted: &[(f64, f64)], q: f64, m: usize, exclude: Option<usize>) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..sorted.len()).filter(|&i| Some(i) != exclude).collect();
        idx.sort_by(|&a, &b| {
            (sorted[a].0 - q).abs().total_cmp(&(sorted[b].0 - q).abs()).then(a.cmp(&b))
        });
        idx.truncate(m);
        idx
    }

    fn sampler(irr: &[f64], pow: &[f64], k: usize) -> ConditionalSampler {
        ConditionalSampler::new(irr.iter().copied().zip(pow.iter().copied()).collect(), k).unwrap()
    }

    #[test]
    fn neighbours_examples() {
        let s = sampler(&[0.0, 1.0, 2.0, 3.0], &[0.0, 10.0, 20.0, 30.0], 2);
        assert_eq!(s.neighbors(1.1), vec![1, 2]);
        let s = sampler(&[0.0, 1.0, 2.0, 3.0], &[0.0, 10.0, 20.0, 30.0], 1);
        assert_eq!(s.neighbors(2.0), vec![2]);
        let s1 = sampler(&[1.0, 3.0], &[5.0, 7.0], 1);
        assert_eq!(s1.neighbors(2.0), vec![0]);
        let s = sampler(&[0.0, 1.0, 2.0, 3.0], &[0.0, 10.0, 20.0, 30.0], 4);
        assert_eq!(s.neighbors(7.0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn tie_rule_prefers_smaller_index_within_equal_irradiance() {
        let s = sampler(&[1.0, 1.0, 1.0, 2.0], &[1.0, 2.0, 3.0, 4.0], 1);
        assert_eq!(s.neighbors(1.4), vec![0]);
        let s = sampler(&[1.0, 1.0, 3.0, 3.0], &[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(s.neighbors(2.0), vec![0, 1, 2]);
    }

    #[test]
    fn ordered_neighbours_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(1..40);
            // coarse values force ties
            let mut pairs: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.gen_range(0..8) as f64 * 0.25, rng.gen())).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let q = rng.gen_range(-2..12) as f64 * 0.125;
            let m = rng.gen_range(1..=n);
            let excl = if n > 1 && rng.gen_bool(0.5) { Some(rng.gen_range(0..n)) } else { None };
            let got = ordered_neighbors(&pairs, q, m, excl);
            let want = brute_order(&pairs, q, m, excl);
            assert_eq!(got, want, "pairs={pairs:?} q={q} m={m} excl={excl:?}");
        }
    }

    #[test]
    fn k_is_clamped() {
        let s = sampler(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4], 10);
        assert_eq!(s.k(), 4);
    }

    #[test]
    fn fit_sampler_uses_observed_hours_only() {
        let power = vec![Some(1.0), None, Some(2.0), Some(3.0), Some(4.0), Some(5.0), None];
        let irr = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let series = HourlySeries::new(default_start_time(), power, irr).unwrap();
        let s = fit_sampler(&series, KChoice::Fixed(3)).unwrap();
        assert_eq!((s.len(), s.k()), (5, 3));

        let sparse = HourlySeries::new(default_start_time(), vec![Some(1.0), None], vec![0.1, 0.2]).unwrap();
        assert!(matches!(fit_sampler(&sparse, KChoice::Auto), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn sampling_distribution_is_uniform_over_neighbours() {
        let s = sampler(&[0.0, 1.0, 2.0, 3.0, 10.0], &[10.0, 20.0, 30.0, 40.0, 99.0], 4);
        let mut rng = stream(1, 0);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let v = s.sample_power(1.5, &mut rng);
            counts[(v / 10.0) as usize - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
        // k = 1 is deterministic
        let s1 = sampler(&[0.0, 1.0], &[5.0, 6.0], 1);
        assert!((0..50).all(|_| s1.sample_power(0.9, &mut rng) == 6.0));
        let c = sampler(&[0.0, 1.0, 2.0], &[7.0, 7.0, 7.0], 3);
        assert!((0..50).all(|_| c.sample_power(0.4, &mut rng) == 7.0));
    }

    #[test]
    fn mean_power_examples() {
        let s = sampler(&[0.0, 1.0, 5.0], &[10.0, 30.0, 100.0], 2);
        assert_eq!(s.mean_power(0.4), 20.0);
        let s = sampler(&[0.0, 1.0, 5.0], &[10.0, 30.0, 100.0], 1);
        assert_eq!(s.mean_power(4.0), 100.0);
        let s = sampler(&[0.0, 1.0, 5.0], &[10.0, 30.0, 110.0], 3);
        assert_eq!(s.mean_power(2.0), 50.0);
    }

    #[test]
    fn mean_equals_expectation_of_draws() {
        let s = sampler(&[0.0, 0.5, 1.0, 1.5, 2.0, 4.0], &[1.0, 3.0, 4.0, 8.0, 9.0, 2.0], 4);
        for q in [0.0, 0.7, 1.9, 3.0] {
            let nb = s.neighbors(q);
            let expect = nb.iter().map(|&i| s.pairs()[i].1).sum::<f64>() / nb.len() as f64;
            assert_eq!(s.mean_power(q), expect);
        }
    }

    #[test]
    fn select_k_constant_power_takes_smallest() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(select_k(&pairs, &[5, 2, 8]).unwrap(), 2);
    }

    /// Exhaustive LOO-MSE for each k, independent of the sorted two-pointer search.
    /// Leave-one-out MSE with ties resolved in the sampler's sorted order.
    fn brute_loo(pairs: &[(f64, f64)], k: usize) -> f64 {
        let mut pairs = pairs.to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut sse = 0.0;
        for i in 0..pairs.len() {
            let mut others: Vec<usize> = (0..pairs.len()).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                (pairs[a].0 - pairs[i].0).abs().total_cmp(&(pairs[b].0 - pairs[i].0).abs()).then(a.cmp(&b))
            });
            let m = others[..k].iter().map(|&j| pairs[j].1).sum::<f64>() / k as f64;
            sse += (m - pairs[i].1).powi(2);
        }
        sse / pairs.len() as f64
    }

    #[test]
    fn select_k_noiseless_prefers_small_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, f64)> = (0..200).map(|_| { let i: f64 = rng.gen(); (i, i) }).collect();
        let grid = [1, 5, 25, 125];
        let mse: Vec<f64> = grid.iter().map(|&k| brute_loo(&pairs, k)).collect();
        assert!(mse[0] < mse[2] && mse[1] < mse[2], "{mse:?}");
        let k = select_k(&pairs, &grid).unwrap();
        assert!(k == 1 || k == 5, "{k}");
    }

    #[test]
    fn select_k_pure_noise_prefers_largest_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pairs: Vec<(f64, f64)> = (0..200).map(|_| (rng.gen(), rng.gen())).collect();
        let grid = [1, 5, 25, 125];
        let mse: Vec<f64> = grid.iter().map(|&k| brute_loo(&pairs, k)).collect();
        let brute_best = grid[mse.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert_eq!(brute_best, 125, "{mse:?}");
        assert_eq!(select_k(&pairs, &grid).unwrap(), 125);
    }

    #[test]
    fn select_k_matches_brute_force_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let pairs: Vec<(f64, f64)> =
                (0..40).map(|_| (rng.gen_range(0..6) as f64, rng.gen_range(0..4) as f64)).collect();
            let grid = [1, 2, 3, 7, 20];
            let mse: Vec<f64> = grid.iter().map(|&k| brute_loo(&pairs, k)).collect();
            let got = select_k(&pairs, &grid).unwrap();
            let gi = grid.iter().position(|&k| k == got).unwrap();
            let best = mse.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((mse[gi] - best).abs() < 1e-12, "{mse:?} got {got}");
        }
    }

    #[test]
    fn auto_k_is_small_on_noiseless_relation() {
        let n = 2000;
        let irr: Vec<f64> = (0..n).map(|t| ((t * 7919) % n) as f64 / n as f64).collect();
        let series = HourlySeries::from_observed(default_start_time(), irr.clone(), irr).unwrap();
        let s = fit_sampler(&series, KChoice::Auto).unwrap();
        assert!(s.k() as f64 <= 0.05 * n as f64, "{}", s.k());
    }

    fn gappy_series() -> HourlySeries {
        let irr: Vec<f64> = (0..60).map(|t| (t % 12) as f64 / 10.0).collect();
        let power = irr
            .iter()
            .enumerate()
            .map(|(t, &i)| if (20..30).contains(&t) { None } else { Some(i * 2.0 + (t % 5) as f64) })
            .collect();
        HourlySeries::new(default_start_time(), power, irr).unwrap()
    }

    #[test]
    fn complete_series_behaviour() {
        let series = gappy_series();
        let s = fit_sampler(&series, KChoice::Fixed(4)).unwrap();
        let mut rng = stream(9, 0);

        let full = complete_series(&series, &s, ImputationMode::Single, &mut rng);
        assert!(full.is_complete());
        for t in 0..series.len() {
            if let Some(p) = series.power()[t] {
                assert_eq!(full.power()[t], Some(p));
            }
        }
        assert_eq!(full, complete_series(&series, &s, ImputationMode::Single, &mut rng));
        // nothing to fill
        assert_eq!(complete_series(&full, &s, ImputationMode::Stochastic, &mut rng), full);

        let observed: Vec<f64> = series.observed_pairs().iter().map(|p| p.1).collect();
        let a = complete_series(&series, &s, ImputationMode::Stochastic, &mut stream(1, 0));
        let b = complete_series(&series, &s, ImputationMode::Stochastic, &mut stream(2, 0));
        assert_ne!(a, b);
        for t in 20..30 {
            assert!(observed.contains(&a.power()[t].unwrap()));
        }
    }

    #[test]
    fn k_choice_json() {
        assert_eq!(serde_json::from_str::<KChoice>("\"auto\"").unwrap(), KChoice::Auto);
        assert_eq!(serde_json::from_str::<KChoice>("7").unwrap(), KChoice::Fixed(7));
        assert!(serde_json::from_str::<KChoice>("0").is_err());
        assert_eq!(serde_json::to_string(&KChoice::Auto).unwrap(), "\"auto\"");
    }
}
