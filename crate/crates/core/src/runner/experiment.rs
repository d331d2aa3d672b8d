//! A validated config plus the training and scoring it implies.

use crate::error::{Error, Result};
use crate::lander::Lander;
use crate::metrics::{apply_metric, mean, Direction, ScoreSample};
use crate::seeding::{derive, label};
use crate::shaping::{ComponentSpec, RewardParams, ALPHA};
use crate::space::Values;
use crate::trainer::{evaluate, train, EpisodeOutcome, Hyperparameters, TrainerSpec};

use super::config::{ExperimentConfig, Scaling, Setup};

/// Task score direction of the lander (landing time, lower is better).
pub const DIRECTION: Direction = Direction::Minimize;

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub setup: Setup,
    pub hash: String,
}

/// Mean task score and mean default-shaped return of a trained policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyScore {
    pub task_score: f64,
    pub default_shaped_return: f64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let setup = config.setup()?;
        let hash = config.hash();
        Ok(Experiment { config, setup, hash })
    }

    pub fn arm_label(&self) -> u64 {
        label(self.config.arm.as_str())
    }

    pub fn components(&self) -> &[ComponentSpec] {
        &self.config.environment.components
    }

    pub fn make_env(&self) -> Lander {
        Lander::with_components(self.config.environment.lander.clone(), self.components().to_vec())
    }

    /// Baseline hyperparameters, default reward weights and `alpha = 1`.
    pub fn default_values(&self) -> Values {
        let mut v = self.config.trainer.baseline.to_values();
        for c in self.components().iter().filter(|c| c.weighted) {
            v.insert(c.name.clone(), c.default_weight);
        }
        v.insert(ALPHA.to_string(), 1.0);
        v
    }

    /// Reward parameters used for training, after explicit scaling if enabled.
    pub fn reward_params(&self, values: &Values) -> Result<RewardParams> {
        let params = RewardParams::from_values(values, self.components())?;
        match self.config.shaping.scaling {
            Scaling::Explicit => params.explicitly_scaled(self.components()),
            _ => Ok(params),
        }
    }

    /// Trains with `values` for `budget` steps and runs the evaluation episodes.
    pub fn train_and_evaluate(&self, values: &Values, budget: u64, seed: u64) -> Result<Vec<EpisodeOutcome>> {
        let hyper = Hyperparameters::from_values(values)?;
        let params = self.reward_params(values)?;
        let spec = TrainerSpec { hyper, budget, seed };
        let policy = train(|| self.make_env(), &params, &spec)?;
        let defaults = RewardParams::defaults(self.components());
        evaluate(
            &policy,
            || self.make_env(),
            &defaults,
            self.config.trainer.eval_episodes,
            derive(&[seed, label("episodes")]),
        )
    }

    /// Configured metric over the evaluation episodes, oriented for maximization.
    pub fn seed_fitness(&self, values: &Values, budget: u64, seed: u64) -> Result<f64> {
        let outcomes = self.train_and_evaluate(values, budget, seed)?;
        let sample = ScoreSample::new(outcomes.iter().map(|o| o.task_score).collect(), DIRECTION)?;
        apply_metric(&sample, self.config.optimizer.metric, self.config.optimizer.std_estimator)
    }

    pub fn policy_score(&self, values: &Values, budget: u64, seed: u64) -> Result<PolicyScore> {
        let outcomes = self.train_and_evaluate(values, budget, seed)?;
        let task: Vec<f64> = outcomes.iter().map(|o| o.task_score).collect();
        let shaped: Vec<f64> = outcomes.iter().map(|o| o.shaped_return).collect();
        let score = PolicyScore {
            task_score: mean(&task),
            default_shaped_return: mean(&shaped),
        };
        if !score.task_score.is_finite() || !score.default_shaped_return.is_finite() {
            return Err(Error::EvaluationFailed("non-finite policy score".into()));
        }
        Ok(score)
    }

    /// Fitness seeds for the `ticket`-th evaluation of optimization run `k`.
    pub fn fitness_seeds(&self, k: usize, ticket: u64) -> Vec<u64> {
        let base = if self.config.optimizer.fixed_fitness_seeds {
            derive(&[self.config.master_seed, self.arm_label(), k as u64, label("fitness")])
        } else {
            derive(&[self.config.master_seed, self.arm_label(), k as u64, label("fitness"), ticket])
        };
        (0..self.config.optimizer.seeds_per_fitness as u64)
            .map(|i| derive(&[base, i]))
            .collect()
    }

    /// Seed of evaluation training `i` of optimization run `k`.
    pub fn evaluation_seed(&self, k: usize, i: usize) -> u64 {
        derive(&[self.config.master_seed, self.arm_label(), k as u64, i as u64])
    }

    pub fn optimizer_seed(&self, k: usize) -> u64 {
        derive(&[self.config.master_seed, self.arm_label(), k as u64, label("optimizer")])
    }

    pub fn sampler_seed(&self, k: usize) -> u64 {
        derive(&[self.config.master_seed, self.arm_label(), k as u64, label("reward-sampler")])
    }

    pub fn landscape_seed(&self, s: usize) -> u64 {
        derive(&[self.config.master_seed, label("landscape"), s as u64])
    }
}
