//! Inner-loop RL training: an environment interface and a reference
//! REINFORCE trainer (moving-average baseline, entropy bonus, Adam updates)
//! over a linear-Gaussian policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Direction;
use crate::seeding;
use crate::shaping::{shaped_reward, ComponentSpec, RewardComponents, RewardParams};
use crate::space::Values;

pub const LEARNING_RATE: &str = "learning_rate";
pub const DISCOUNTING: &str = "discounting";
pub const ENTROPY_COEF: &str = "entropy_coef";
pub const BATCH_SIZE: &str = "batch_size";

const LOG_STD_INIT: f64 = -0.5;
const LOG_STD_MIN: f64 = -4.0;
const LOG_STD_MAX: f64 = 1.0;
const BASELINE_DECAY: f64 = 0.9;

pub struct Transition {
    pub features: Vec<f64>,
    pub components: RewardComponents,
    pub done: bool,
}

/// Episodic environment emitting decomposed rewards.
pub trait Environment {
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Transition>;
    fn action_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn components(&self) -> &[ComponentSpec];
    fn direction(&self) -> Direction;
    /// Task score of the finished episode, `None` while it is running.
    fn task_score(&self) -> Option<f64>;
}

/// One-step bandit with reward `-(a - target)^2`; the task score is the reward.
#[derive(Debug, Clone)]
pub struct Bandit {
    pub target: f64,
    last: Option<f64>,
}

impl Bandit {
    pub fn new(target: f64) -> Self {
        Bandit { target, last: None }
    }

    /// Closed-form expected reward of a Gaussian action `N(mean, std^2)`.
    pub fn expected_reward(&self, mean: f64, std: f64) -> f64 {
        -((mean - self.target).powi(2) + std * std)
    }
}

impl Environment for Bandit {
    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.last = None;
        vec![1.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let r = -(action[0] - self.target).powi(2);
        self.last = Some(r);
        Ok(Transition {
            features: vec![1.0],
            components: RewardComponents {
                base: r,
                shaping: Default::default(),
            },
            done: true,
        })
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn feature_dim(&self) -> usize {
        1
    }

    fn components(&self) -> &[ComponentSpec] {
        &[]
    }

    fn direction(&self) -> Direction {
        Direction::Maximize
    }

    fn task_score(&self) -> Option<f64> {
        self.last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    /// `1 - gamma`.
    pub discounting: f64,
    pub entropy_coef: f64,
    /// Environment steps per policy update.
    pub batch_size: usize,
}

impl Hyperparameters {
    pub fn gamma(&self) -> f64 {
        1.0 - self.discounting
    }

    pub fn from_values(values: &Values) -> Result<Self> {
        let get = |name: &str| {
            values
                .get(name)
                .copied()
                .ok_or_else(|| Error::domain(name, "missing hyperparameter"))
        };
        let batch = get(BATCH_SIZE)?;
        if !(batch >= 1.0) || batch.fract() != 0.0 {
            return Err(Error::domain(BATCH_SIZE, format!("must be a positive integer, got {batch}")));
        }
        let hp = Hyperparameters {
            learning_rate: get(LEARNING_RATE)?,
            discounting: get(DISCOUNTING)?,
            entropy_coef: get(ENTROPY_COEF)?,
            batch_size: batch as usize,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn to_values(&self) -> Values {
        [
            (LEARNING_RATE, self.learning_rate),
            (DISCOUNTING, self.discounting),
            (ENTROPY_COEF, self.entropy_coef),
            (BATCH_SIZE, self.batch_size as f64),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain(LEARNING_RATE, "must be positive"));
        }
        let gamma = self.gamma();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(DISCOUNTING, format!("gamma = {gamma} outside (0, 1)")));
        }
        if !(self.entropy_coef >= 0.0) || !self.entropy_coef.is_finite() {
            return Err(Error::domain(ENTROPY_COEF, "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain(BATCH_SIZE, "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    pub hyper: Hyperparameters,
    /// Environment steps.
    pub budget: u64,
    pub seed: u64,
}

/// Linear-Gaussian policy: `a ~ N(W phi(s), diag(exp(log_std))^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub feature_dim: usize,
    pub action_dim: usize,
    /// Row-major `action_dim x feature_dim`.
    pub weights: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl Policy {
    pub fn new(feature_dim: usize, action_dim: usize) -> Self {
        Policy {
            feature_dim,
            action_dim,
            weights: vec![0.0; feature_dim * action_dim],
            log_std: vec![LOG_STD_INIT; action_dim],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.log_std.len()
    }

    pub fn mean(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.feature_dim)
            .map(|row| row.iter().zip(features).map(|(w, f)| w * f).sum())
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> Vec<f64> {
        self.mean(features)
            .into_iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.log_std).all(|v| v.is_finite())
    }

    fn apply(&mut self, delta: &[f64]) {
        let (dw, dls) = delta.split_at(self.weights.len());
        self.weights.iter_mut().zip(dw).for_each(|(w, d)| *w += d);
        self.log_std
            .iter_mut()
            .zip(dls)
            .for_each(|(l, d)| *l = (*l + d).clamp(LOG_STD_MIN, LOG_STD_MAX));
    }
}

/// One visited state with its sampled action and discounted return-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: Vec<f64>,
    pub ret: f64,
}

/// Score-function gradient of the expected return plus the entropy bonus
/// gradient, averaged over samples. Layout matches [`Policy::num_params`].
pub fn policy_gradient(policy: &Policy, batch: &[Sample], baseline: f64, entropy_coef: f64) -> Vec<f64> {
    let nw = policy.weights.len();
    let mut grad = vec![0.0; policy.num_params()];
    if batch.is_empty() {
        return grad;
    }
    let inv_var: Vec<f64> = policy.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    for sample in batch {
        let adv = sample.ret - baseline;
        let mean = policy.mean(&sample.features);
        for k in 0..policy.action_dim {
            let z = sample.action[k] - mean[k];
            let row = &mut grad[k * policy.feature_dim..(k + 1) * policy.feature_dim];
            let coef = adv * z * inv_var[k];
            row.iter_mut()
                .zip(&sample.features)
                .for_each(|(g, f)| *g += coef * f);
            grad[nw + k] += adv * (z * z * inv_var[k] - 1.0);
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    // d/d(log_std) of the Gaussian entropy is 1 per action dimension
    grad[nw..].iter_mut().for_each(|g| *g += entropy_coef);
    grad
}

#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent step for gradient `g`.
    fn step(&mut self, g: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, gi)| {
                self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * gi;
                self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * gi * gi;
                self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Runs episodes with a stochastic policy until `batch_size` steps are
/// collected or `step_limit` is hit. Returns the samples and steps used.
pub fn collect_batch<E, R>(
    env: &mut E,
    policy: &Policy,
    params: &RewardParams,
    gamma: f64,
    batch_size: usize,
    step_limit: u64,
    rng: &mut R,
) -> Result<(Vec<Sample>, u64)>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut samples = Vec::with_capacity(batch_size);
    let mut used = 0u64;
    while samples.len() < batch_size && used < step_limit {
        let mut features = env.reset(rng.random());
        let start = samples.len();
        let mut rewards = Vec::new();
        loop {
            let action = policy.sample(&features, rng);
            let tr = env.step(&action)?;
            let r = shaped_reward(&tr.components, params, env.components())?;
            samples.push(Sample {
                features: std::mem::replace(&mut features, tr.features),
                action,
                ret: 0.0,
            });
            rewards.push(r);
            used += 1;
            if tr.done || used >= step_limit {
                break;
            }
        }
        let mut g = 0.0;
        for (sample, r) in samples[start..].iter_mut().zip(&rewards).rev() {
            g = r + gamma * g;
            sample.ret = g;
        }
    }
    Ok((samples, used))
}

/// Trains a fresh policy for `spec.budget` environment steps.
pub fn train<E, F>(make_env: F, params: &RewardParams, spec: &TrainerSpec) -> Result<Policy>
where
    E: Environment,
    F: Fn() -> E,
{
    spec.hyper.validate()?;
    let mut env = make_env();
    let mut policy = Policy::new(env.feature_dim(), env.action_dim());
    let mut adam = Adam::new(policy.num_params(), spec.hyper.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma = spec.hyper.gamma();
    let mut baseline: Option<f64> = None;
    let mut used = 0u64;
    while used < spec.budget {
        let (batch, steps) = collect_batch(
            &mut env,
            &policy,
            params,
            gamma,
            spec.hyper.batch_size,
            spec.budget - used,
            &mut rng,
        )?;
        used += steps;
        let batch_mean = batch.iter().map(|s| s.ret).sum::<f64>() / batch.len() as f64;
        let b = *baseline.get_or_insert(batch_mean);
        let grad = policy_gradient(&policy, &batch, b, spec.hyper.entropy_coef);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged(format!(
                "non-finite gradient after {used} steps"
            )));
        }
        baseline = Some(BASELINE_DECAY * b + (1.0 - BASELINE_DECAY) * batch_mean);
        policy.apply(&adam.step(&grad));
        if !policy.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "non-finite policy after {used} steps"
            )));
        }
    }
    Ok(policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub task_score: f64,
    pub shaped_return: f64,
}

/// Runs `n_episodes` with the policy's mean action. Episode `i` resets with a
/// seed derived from `(seed, i)`.
pub fn evaluate<E, F>(
    policy: &Policy,
    make_env: F,
    params: &RewardParams,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeOutcome>>
where
    E: Environment,
    F: Fn() -> E,
{
    if n_episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut env = make_env();
    (0..n_episodes)
        .map(|i| {
            let mut features = env.reset(seeding::derive(&[seed, i as u64]));
            let mut shaped_return = 0.0;
            loop {
                let tr = env.step(&policy.mean(&features))?;
                shaped_return += shaped_reward(&tr.components, params, env.components())?;
                features = tr.features;
                if tr.done {
                    break;
                }
            }
            let task_score = env
                .task_score()
                .ok_or_else(|| Error::contract("environment finished without a task score"))?;
            Ok(EpisodeOutcome {
                task_score,
                shaped_return,
            })
        })
        .collect()
}
