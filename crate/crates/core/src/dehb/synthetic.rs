//! Synthetic objectives used to exercise the optimizer without RL training.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::space::{ParamSpec, Role, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticObjective {
    /// `-|x - optimum|^2` plus Gaussian noise with
    /// `sigma(b) = noise_at_max * sqrt(max_budget / b)`.
    NoisySphere {
        optimum: Vec<f64>,
        noise_at_max: f64,
        max_budget: u64,
    },
    /// Two configurations split at `x0 = 0.5`, each a normal score law.
    MeanVarianceTradeoff {
        low: ScoreLaw,
        high: ScoreLaw,
        sample_size: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreLaw {
    pub mean: f64,
    pub std: f64,
}

impl SyntheticObjective {
    pub fn noisy_sphere(dim: usize, noise_at_max: f64, max_budget: u64) -> Self {
        SyntheticObjective::NoisySphere {
            optimum: (0..dim).map(|i| 0.2 + 0.6 * i as f64 / dim.max(2) as f64).collect(),
            noise_at_max,
            max_budget,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SyntheticObjective::NoisySphere { optimum, .. } => optimum.len(),
            SyntheticObjective::MeanVarianceTradeoff { .. } => 1,
        }
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::new(
            (0..self.dim())
                .map(|i| {
                    ParamSpec::continuous(&format!("x{i}"), 0.0, 1.0, false, Role::Hyperparameter)
                        .expect("unit interval is a valid spec")
                })
                .collect(),
        )
        .expect("dimension is at least one")
    }

    pub fn noise_std(&self, budget: u64) -> f64 {
        match self {
            SyntheticObjective::NoisySphere {
                noise_at_max,
                max_budget,
                ..
            } => noise_at_max * (*max_budget as f64 / budget.max(1) as f64).sqrt(),
            SyntheticObjective::MeanVarianceTradeoff { .. } => 0.0,
        }
    }

    pub fn law(&self, unit: &[f64]) -> Option<ScoreLaw> {
        match self {
            SyntheticObjective::MeanVarianceTradeoff { low, high, .. } => {
                Some(if unit[0] < 0.5 { *low } else { *high })
            }
            SyntheticObjective::NoisySphere { .. } => None,
        }
    }

    /// Noise-free objective value (higher is better).
    pub fn true_value(&self, unit: &[f64]) -> f64 {
        match self {
            SyntheticObjective::NoisySphere { optimum, .. } => {
                -unit.iter().zip(optimum).map(|(x, o)| (x - o).powi(2)).sum::<f64>()
            }
            SyntheticObjective::MeanVarianceTradeoff { .. } => self.law(unit).unwrap().mean,
        }
    }

    /// Distance from the best attainable true value.
    pub fn regret(&self, unit: &[f64]) -> f64 {
        match self {
            SyntheticObjective::NoisySphere { .. } => -self.true_value(unit),
            SyntheticObjective::MeanVarianceTradeoff { low, high, .. } => {
                low.mean.max(high.mean) - self.true_value(unit)
            }
        }
    }

    /// Observed scores of one evaluation (maximize direction).
    pub fn sample<R: Rng + ?Sized>(&self, unit: &[f64], budget: u64, rng: &mut R) -> Vec<f64> {
        match self {
            SyntheticObjective::NoisySphere { .. } => {
                let noise = Normal::new(0.0, self.noise_std(budget)).expect("finite std");
                vec![self.true_value(unit) + noise.sample(rng)]
            }
            SyntheticObjective::MeanVarianceTradeoff { sample_size, .. } => {
                let law = self.law(unit).unwrap();
                let normal = Normal::new(law.mean, law.std).expect("finite std");
                (0..*sample_size).map(|_| normal.sample(rng)).collect()
            }
        }
    }
}

/// Uniform random search at a single budget; returns the unit vector with the
/// best observed score after `evaluations` draws.
pub fn random_search<R: Rng + ?Sized>(
    objective: &SyntheticObjective,
    budget: u64,
    evaluations: usize,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let space = objective.space();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..evaluations {
        let config = space.sample_uniform(rng);
        let scores = objective.sample(config.unit(), budget, rng);
        let f = scores.iter().sum::<f64>() / scores.len() as f64;
        if best.as_ref().is_none_or(|(_, b)| f > *b) {
            best = Some((config.unit().to_vec(), f));
        }
    }
    best.map(|(u, _)| u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_strictly_decreases_with_budget() {
        let obj = SyntheticObjective::noisy_sphere(6, 0.01, 81);
        let sigmas: Vec<f64> = [1, 3, 9, 27, 81].iter().map(|&b| obj.noise_std(b)).collect();
        assert!(sigmas.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(obj.noise_std(81), 0.01);
    }

    #[test]
    fn regret_zero_at_optimum() {
        let obj = SyntheticObjective::noisy_sphere(3, 0.01, 9);
        let SyntheticObjective::NoisySphere { optimum, .. } = &obj else { unreachable!() };
        assert_eq!(obj.regret(optimum), 0.0);
        assert!(obj.regret(&[0.0, 0.0, 0.0]) > 0.0);
    }

    #[test]
    fn tradeoff_sample_moments() {
        let obj = SyntheticObjective::MeanVarianceTradeoff {
            low: ScoreLaw { mean: 1.0, std: 0.5 },
            high: ScoreLaw { mean: 0.95, std: 0.05 },
            sample_size: 20_000,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = obj.sample(&[0.2], 1, &mut rng);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert!((obj.regret(&[0.9]) - 0.05).abs() < 1e-12);
        assert_eq!(obj.regret(&[0.1]), 0.0);
    }
}
