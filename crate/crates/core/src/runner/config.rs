//! Experiment configuration file (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dehb::{budget_ladder, BudgetLadder, DehbSettings};
use crate::error::{Error, Result};
use crate::lander::LanderConfig;
use crate::metrics::{Metric, StdEstimator};
use crate::shaping::{implicit_ranges, ComponentSpec, ALPHA};
use crate::space::{ParamSpec, Role, SearchSpace, Values};
use crate::trainer::Hyperparameters;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    HpoOnly,
    RpoOnly,
    Combined,
    CombinedRs,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::HpoOnly => "hpo-only",
            Arm::RpoOnly => "rpo-only",
            Arm::Combined => "combined",
            Arm::CombinedRs => "combined-rs",
        }
    }

    /// Roles the optimizer searches over.
    pub fn optimized_roles(self) -> &'static [Role] {
        match self {
            Arm::HpoOnly | Arm::CombinedRs => &[Role::Hyperparameter],
            Arm::RpoOnly => &[Role::RewardWeight, Role::RewardScale],
            Arm::Combined => &[Role::Hyperparameter, Role::RewardWeight, Role::RewardScale],
        }
    }

    /// Roles drawn uniformly at random for every ask.
    pub fn sampled_roles(self) -> &'static [Role] {
        match self {
            Arm::CombinedRs => &[Role::RewardWeight, Role::RewardScale],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub arm: Arm,
    pub master_seed: u64,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub trainer: TrainerConfig,
    pub space: SpaceConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub shaping: ShapingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeConfig>,
    /// Store evaluation durations in the journal (breaks byte-identical reruns).
    #[serde(default)]
    pub record_wall_clock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default)]
    pub lander: LanderConfig,
    #[serde(default = "LanderConfig::default_components")]
    pub components: Vec<ComponentSpec>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            lander: LanderConfig::default(),
            components: LanderConfig::default_components(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub baseline: Hyperparameters,
    /// Environment steps of a full training.
    pub max_budget: u64,
    /// Mean-action episodes used to score a trained policy.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
}

fn default_eval_episodes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub params: Vec<ParamEntry>,
}

/// One declared parameter. Reward weights may give only a `default`; the range
/// then follows from [`crate::space::weight_search_range`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default)]
    pub log: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

impl ParamEntry {
    pub fn to_spec(&self) -> Result<ParamSpec> {
        let spec = match (&self.choices, self.lo, self.hi, self.default) {
            (Some(choices), None, None, _) => ParamSpec::categorical(&self.name, choices.clone(), self.role),
            (None, Some(lo), Some(hi), _) => ParamSpec::continuous(&self.name, lo, hi, self.log, self.role),
            (None, None, None, Some(d)) if self.role == Role::RewardWeight => {
                ParamSpec::reward_weight_from_default(&self.name, d)
            }
            _ => {
                return Err(Error::Config(format!(
                    "parameter {}: give either lo/hi, choices, or (reward weights only) a default",
                    self.name
                )))
            }
        };
        spec.map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub eta: u64,
    pub rungs: usize,
    /// In full-training equivalents.
    pub total_budget: f64,
    pub f: f64,
    pub p_cross: f64,
    pub metric: Metric,
    pub std_estimator: StdEstimator,
    pub seeds_per_fitness: usize,
    pub in_flight: usize,
    /// Reuse the same fitness seeds for every evaluation instead of fresh ones.
    pub fixed_fitness_seeds: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta: 3,
            rungs: 3,
            total_budget: 133.0,
            f: 0.5,
            p_cross: 0.5,
            metric: Metric::So,
            std_estimator: StdEstimator::Sample,
            seeds_per_fitness: 3,
            in_flight: 1,
            fixed_fitness_seeds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub optimization_seeds: usize,
    pub evaluation_seeds: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            optimization_seeds: 5,
            evaluation_seeds: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingConfig {
    pub scaling: Scaling,
    /// Multiplier for implicit scaling; defaults to the L1 norm of the default weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub implicit_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub axis_a: String,
    pub axis_b: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_landscape_seeds")]
    pub seeds: usize,
}

fn default_resolution() -> usize {
    10
}

fn default_landscape_seeds() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides. Keys are dotted
    /// paths; numeric segments index arrays (`space.params.0.hi=5`). Values
    /// are TOML literals, falling back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form; independent of TOML layout.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        self.environment.lander.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.trainer.baseline.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.trainer.max_budget == 0 || self.trainer.eval_episodes == 0 {
            return bad("trainer.max_budget and trainer.eval_episodes must be positive".into());
        }
        let o = &self.optimizer;
        if o.seeds_per_fitness == 0 || o.in_flight == 0 || !(o.total_budget > 0.0) {
            return bad("optimizer.seeds_per_fitness, in_flight and total_budget must be positive".into());
        }
        if self.protocol.optimization_seeds == 0 || self.protocol.evaluation_seeds == 0 {
            return bad("protocol seed counts must be positive".into());
        }
        for p in &self.space.params {
            if p.role == Role::RewardScale && p.name != ALPHA {
                return bad(format!("reward scale parameter must be named {ALPHA}"));
            }
            if p.role == Role::RewardWeight
                && !self.environment.components.iter().any(|c| c.weighted && c.name == p.name)
            {
                return bad(format!("reward weight {} is not a weighted environment component", p.name));
            }
        }
        self.ladder()?;
        let setup = self.setup()?;
        if setup.optimized.is_none() {
            return bad(format!("arm {} has nothing to optimize", self.arm.as_str()));
        }
        if let Some(l) = &self.landscape {
            if l.seeds == 0 {
                return bad("landscape.seeds must be positive".into());
            }
            for axis in [&l.axis_a, &l.axis_b] {
                if setup.declared.get(axis).is_none() {
                    return bad(format!("landscape axis {axis} is not a declared parameter"));
                }
            }
        }
        Ok(())
    }

    pub fn ladder(&self) -> Result<BudgetLadder> {
        budget_ladder(self.trainer.max_budget, self.optimizer.eta, self.optimizer.rungs)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dehb_settings(&self) -> DehbSettings {
        DehbSettings {
            f: self.optimizer.f,
            p_cross: self.optimizer.p_cross,
            total_budget: self.optimizer.total_budget,
            in_flight: self.optimizer.in_flight,
        }
    }

    /// Splits the declared space according to the arm and scaling mode.
    pub fn setup(&self) -> Result<Setup> {
        let specs = self
            .space
            .params
            .iter()
            .map(ParamEntry::to_spec)
            .collect::<Result<Vec<_>>>()?;
        let declared = SearchSpace::new(specs).map_err(|e| Error::Config(e.to_string()))?;
        let space = match self.shaping.scaling {
            Scaling::Implicit => {
                let norm = self.shaping.implicit_norm.unwrap_or_else(|| {
                    self.environment
                        .components
                        .iter()
                        .filter(|c| c.weighted)
                        .map(|c| c.default_weight.abs())
                        .sum()
                });
                implicit_ranges(&declared, norm).map_err(|e| Error::Config(e.to_string()))?
            }
            _ => declared.clone(),
        };
        let mut frozen = self.trainer.baseline.to_values();
        for c in self.environment.components.iter().filter(|c| c.weighted) {
            frozen.insert(c.name.clone(), c.default_weight);
        }
        frozen.insert(ALPHA.to_string(), 1.0);
        let optimized = space.filter_roles(self.arm.optimized_roles());
        let sampled = space.filter_roles(self.arm.sampled_roles());
        for s in optimized.iter().chain(sampled.iter()) {
            for name in s.names() {
                frozen.remove(name);
            }
        }
        Ok(Setup {
            declared,
            optimized,
            sampled,
            frozen,
        })
    }
}

/// How an arm turns the declared space into optimizer input.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    /// Every declared parameter, unscaled.
    pub declared: SearchSpace,
    pub optimized: Option<SearchSpace>,
    pub sampled: Option<SearchSpace>,
    /// Values of everything that is neither optimized nor sampled.
    pub frozen: Values,
}

fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let value = parse_literal(raw.trim());
    let segments: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = segments.split_last().expect("split yields one segment");
    let mut node: &mut toml::Value = doc
        .entry(parents.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(Default::default()));
    if parents.is_empty() {
        *node = value;
        return Ok(());
    }
    for seg in &parents[1..] {
        node = child(node, seg, item)?;
    }
    match node {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let idx: usize = last
                .parse()
                .map_err(|_| Error::Config(format!("override {item:?}: {last} is not an index")))?;
            let slot = a
                .get_mut(idx)
                .ok_or_else(|| Error::Config(format!("override {item:?}: index {idx} out of range")))?;
            *slot = value;
        }
        _ => return Err(Error::Config(format!("override {item:?} does not name a table"))),
    }
    Ok(())
}

fn child<'a>(node: &'a mut toml::Value, seg: &str, item: &str) -> Result<&'a mut toml::Value> {
    match node {
        toml::Value::Table(t) => Ok(t
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))),
        toml::Value::Array(a) => {
            let idx: usize = seg
                .parse()
                .map_err(|_| Error::Config(format!("override {item:?}: {seg} is not an index")))?;
            a.get_mut(idx)
                .ok_or_else(|| Error::Config(format!("override {item:?}: index {idx} out of range")))
        }
        _ => Err(Error::Config(format!("override {item:?} does not name a table"))),
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
