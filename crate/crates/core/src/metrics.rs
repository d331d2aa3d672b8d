//! Task-objective metrics, seed-averaged fitness and experiment aggregation.
//!
//! The optimizer maximizes. Scores of minimize-direction tasks are negated
//! before they reach it; the coefficient of variation always uses raw scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Maps a raw score into the optimizer's maximization convention (and back).
    pub fn orient(self, value: f64) -> f64 {
        match self {
            Direction::Maximize => value,
            Direction::Minimize => -value,
        }
    }

    /// True when `a` is strictly better than `b` in this direction.
    pub fn better(self, a: f64, b: f64) -> bool {
        self.orient(a) > self.orient(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdEstimator {
    /// `n - 1` denominator.
    #[default]
    Sample,
    /// `n` denominator.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean task score.
    #[default]
    So,
    /// Mean task score minus its standard deviation.
    Mo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub scores: Vec<f64>,
    pub direction: Direction,
}

impl ScoreSample {
    pub fn new(scores: Vec<f64>, direction: Direction) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::contract("score sample is empty"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::contract("score sample contains non-finite values"));
        }
        Ok(ScoreSample { scores, direction })
    }

    pub fn maximize(scores: Vec<f64>) -> Result<Self> {
        ScoreSample::new(scores, Direction::Maximize)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64], estimator: StdEstimator) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let denom = match estimator {
        StdEstimator::Sample => xs.len() as f64 - 1.0,
        StdEstimator::Population => xs.len() as f64,
    };
    (ss / denom).sqrt()
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Optimizer-facing mean task score.
pub fn single_objective(sample: &ScoreSample) -> Result<f64> {
    if sample.scores.is_empty() {
        return Err(Error::contract("score sample is empty"));
    }
    Ok(sample.direction.orient(mean(&sample.scores)))
}

/// Optimizer-facing variance-penalized score: `mean - std` in the task's own
/// direction, so the penalty always makes the value worse.
pub fn multi_objective(sample: &ScoreSample, estimator: StdEstimator) -> Result<f64> {
    if sample.scores.len() < 2 {
        return Err(Error::domain(
            "multi_objective",
            "standard deviation needs at least two scores",
        ));
    }
    let m = sample.direction.orient(mean(&sample.scores));
    Ok(m - std_dev(&sample.scores, estimator))
}

pub fn apply_metric(sample: &ScoreSample, metric: Metric, estimator: StdEstimator) -> Result<f64> {
    match metric {
        Metric::So => single_objective(sample),
        Metric::Mo => multi_objective(sample, estimator),
    }
}

/// `100 * std / |mean|` on raw scores. Single-element samples have zero spread.
pub fn coefficient_of_variation(sample: &ScoreSample, estimator: StdEstimator) -> Result<f64> {
    let m = mean(&sample.scores);
    if m == 0.0 {
        return Err(Error::domain("coefficient_of_variation", "mean is zero"));
    }
    let s = if sample.scores.len() < 2 {
        0.0
    } else {
        std_dev(&sample.scores, estimator)
    };
    Ok(100.0 * s / m.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub seeds: Vec<u64>,
    /// Per-seed metric values; `None` marks a failed training.
    pub per_seed: Vec<Option<f64>>,
    /// Mean over seeds, `None` if any seed failed.
    pub fitness: Option<f64>,
}

impl FitnessReport {
    pub fn failed(&self) -> bool {
        self.fitness.is_none()
    }
}

/// Evaluates `per_seed` for every seed (in parallel) and averages.
///
/// Any failed seed makes the whole report failed.
pub fn fitness<F>(seeds: &[u64], per_seed: F) -> Result<FitnessReport>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::contract("fitness needs at least one seed"));
    }
    let per_seed: Vec<Option<f64>> = seeds
        .par_iter()
        .map(|&s| per_seed(s).ok().filter(|v| v.is_finite()))
        .collect();
    let fitness = per_seed
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|vals| mean(&vals));
    Ok(FitnessReport {
        seeds: seeds.to_vec(),
        per_seed,
        fitness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Median over runs of each run's median score.
    pub median_score: f64,
    /// Median over runs of each run's CV (percent); `None` if undefined for all runs.
    pub median_cv: Option<f64>,
    pub run_medians: Vec<f64>,
    pub run_cvs: Vec<Option<f64>>,
}

/// Median-of-medians aggregation over optimization runs (ragged allowed).
pub fn aggregate_experiment(runs: &[Vec<f64>], estimator: StdEstimator) -> Result<Aggregate> {
    if runs.is_empty() {
        return Err(Error::contract("aggregation needs at least one run"));
    }
    if runs.iter().any(|r| r.is_empty()) {
        return Err(Error::contract("every run needs at least one evaluation"));
    }
    let run_medians: Vec<f64> = runs.iter().map(|r| median(r)).collect();
    let run_cvs: Vec<Option<f64>> = runs
        .iter()
        .map(|r| {
            // sorted so the result does not depend on evaluation order
            let mut sorted = r.clone();
            sorted.sort_by(f64::total_cmp);
            ScoreSample::maximize(sorted)
                .and_then(|s| coefficient_of_variation(&s, estimator))
                .ok()
        })
        .collect();
    let defined: Vec<f64> = run_cvs.iter().flatten().copied().collect();
    Ok(Aggregate {
        median_score: median(&run_medians),
        median_cv: (!defined.is_empty()).then(|| median(&defined)),
        run_medians,
        run_cvs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapComparison {
    /// `median(a) - median(b)`.
    pub median_difference: f64,
    /// Two-sided bootstrap p-estimate for a zero difference.
    pub p_value: f64,
}

/// Unpaired bootstrap of the difference of medians.
pub fn bootstrap_compare(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<BootstrapComparison> {
    if a.len() < 5 || b.len() < 5 {
        return Err(Error::domain(
            "bootstrap_compare",
            format!("both samples need at least 5 values, got {} and {}", a.len(), b.len()),
        ));
    }
    if n_resamples == 0 {
        return Err(Error::domain("n_resamples", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resample = |xs: &[f64], rng: &mut ChaCha8Rng| {
        let draw: Vec<f64> = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect();
        median(&draw)
    };
    let (mut le, mut ge) = (0usize, 0usize);
    for _ in 0..n_resamples {
        let d = resample(a, &mut rng) - resample(b, &mut rng);
        if d <= 0.0 {
            le += 1;
        }
        if d >= 0.0 {
            ge += 1;
        }
    }
    let tail = le.min(ge) as f64 / n_resamples as f64;
    Ok(BootstrapComparison {
        median_difference: median(a) - median(b),
        p_value: (2.0 * tail).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max(xs: &[f64]) -> ScoreSample {
        ScoreSample::maximize(xs.to_vec()).unwrap()
    }

    #[test]
    fn single_objective_examples() {
        assert_eq!(single_objective(&max(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(single_objective(&max(&[2.0, 4.0, 6.0])).unwrap(), 4.0);
        let min = ScoreSample::new(vec![2.0, 4.0, 6.0], Direction::Minimize).unwrap();
        assert_eq!(single_objective(&min).unwrap(), -4.0);
        assert!(ScoreSample::maximize(vec![]).is_err());
    }

    #[test]
    fn multi_objective_examples() {
        let s = StdEstimator::Sample;
        assert_eq!(multi_objective(&max(&[1.0, 1.0, 1.0]), s).unwrap(), 1.0);
        assert_eq!(multi_objective(&max(&[2.0, 4.0, 6.0]), s).unwrap(), 2.0);
        assert!(matches!(multi_objective(&max(&[3.0]), s), Err(Error::Domain { .. })));
        let min = ScoreSample::new(vec![2.0, 4.0, 6.0], Direction::Minimize).unwrap();
        assert_eq!(multi_objective(&min, s).unwrap(), -6.0);
    }

    #[test]
    fn population_estimator_switch() {
        let v = multi_objective(&max(&[2.0, 4.0, 6.0]), StdEstimator::Population).unwrap();
        assert!((v - (4.0 - (8.0f64 / 3.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn cv_examples() {
        let s = StdEstimator::Sample;
        assert_eq!(coefficient_of_variation(&max(&[1.0, 1.0, 1.0]), s).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&max(&[2.0, 4.0, 6.0]), s).unwrap(), 50.0);
        assert!(coefficient_of_variation(&max(&[-1.0, 1.0]), s).is_err());
        let neg = coefficient_of_variation(&max(&[-2.0, -4.0, -6.0]), s).unwrap();
        assert_eq!(neg, 50.0);
    }

    #[test]
    fn fitness_examples() {
        let r = fitness(&[1, 2, 3], |_| Ok(5.0)).unwrap();
        assert_eq!(r.fitness, Some(5.0));
        let r = fitness(&[1, 2, 3], |s| Ok(3.0 * s as f64)).unwrap();
        assert_eq!(r.fitness, Some(6.0));
        assert_eq!(r.per_seed, vec![Some(3.0), Some(6.0), Some(9.0)]);
        let r = fitness(&[1, 2, 3], |s| {
            if s == 2 {
                Err(Error::TrainingDiverged("boom".into()))
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert!(r.failed());
        let r = fitness(&[4], |_| Ok(f64::NAN)).unwrap();
        assert!(r.failed());
        assert!(fitness(&[], |_| Ok(1.0)).is_err());
    }

    #[test]
    fn single_seed_fitness_is_exact() {
        let r = fitness(&[42], |_| Ok(0.123456789)).unwrap();
        assert_eq!(r.fitness, Some(0.123456789));
    }

    #[test]
    fn aggregate_examples() {
        let s = StdEstimator::Sample;
        let runs = vec![vec![7.0; 10]; 5];
        let agg = aggregate_experiment(&runs, s).unwrap();
        assert_eq!((agg.median_score, agg.median_cv), (7.0, Some(0.0)));
        let runs: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 100.0].iter().map(|&m| vec![m]).collect();
        assert_eq!(aggregate_experiment(&runs, s).unwrap().median_score, 3.0);
        let single = aggregate_experiment(&[vec![5.0, 1.0, 3.0]], s).unwrap();
        assert_eq!(single.median_score, 3.0);
        assert!(aggregate_experiment(&[], s).is_err());
        assert!(aggregate_experiment(&[vec![]], s).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let same = bootstrap_compare(&a, &a, 2000, 1).unwrap();
        assert_eq!(same.median_difference, 0.0);
        assert!(same.p_value > 0.5, "{same:?}");
        let b: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        let apart = bootstrap_compare(&a, &b, 2000, 1).unwrap();
        assert!(apart.p_value < 0.01);
        assert_eq!(apart.median_difference, -100.0);
        let mut shuffled = a.clone();
        shuffled.reverse();
        let again = bootstrap_compare(&shuffled, &b, 2000, 1).unwrap();
        assert_eq!(again.median_difference, apart.median_difference);
        assert!(bootstrap_compare(&a[..4], &b, 100, 1).is_err());
        assert_eq!(
            bootstrap_compare(&a, &b, 500, 7).unwrap(),
            bootstrap_compare(&a, &b, 500, 7).unwrap()
        );
    }

    #[test]
    fn orientation_preserves_argmin() {
        let raw = [310.0, 120.0, 1000.0, 450.0];
        let dir = Direction::Minimize;
        let argmax_oriented = (0..raw.len())
            .max_by(|&i, &j| dir.orient(raw[i]).total_cmp(&dir.orient(raw[j])))
            .unwrap();
        let argmin_raw = (0..raw.len())
            .min_by(|&i, &j| raw[i].total_cmp(&raw[j]))
            .unwrap();
        assert_eq!(argmax_oriented, argmin_raw);
    }

    proptest! {
        #[test]
        fn mo_never_exceeds_so(xs in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let s = max(&xs);
            let so = single_objective(&s).unwrap();
            let mo = multi_objective(&s, StdEstimator::Sample).unwrap();
            prop_assert!(mo <= so);
        }

        #[test]
        fn cv_scale_invariant(xs in prop::collection::vec(1.0f64..100.0, 2..20), c in 0.01f64..100.0) {
            let s = StdEstimator::Sample;
            let a = coefficient_of_variation(&max(&xs), s).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let b = coefficient_of_variation(&max(&scaled), s).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn aggregate_permutation_invariant(
            runs in prop::collection::vec(prop::collection::vec(1.0f64..50.0, 1..6), 1..6),
            rot in 0usize..6,
        ) {
            let s = StdEstimator::Sample;
            let base = aggregate_experiment(&runs, s).unwrap();
            let mut permuted: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().rev().copied().collect()).collect();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            let other = aggregate_experiment(&permuted, s).unwrap();
            prop_assert_eq!(base.median_score, other.median_score);
            prop_assert_eq!(base.median_cv, other.median_cv);
        }
    }
}
