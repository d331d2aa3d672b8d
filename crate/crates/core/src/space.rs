//! Parameter search spaces and the unit-hypercube encoding the optimizer works in.
//!
//! Every optimized quantity (RL hyperparameters, reward weights, the reward
//! scale) is described by a [`ParamSpec`]. A [`SearchSpace`] is an ordered list
//! of specs; a point in it is a vector in `[0, 1]^d` that [`SearchSpace::decode`]
//! maps to named values.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Decoded parameter values by name.
pub type Values = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hyperparameter,
    RewardWeight,
    RewardScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64, log: bool },
    Categorical { choices: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    pub role: Role,
}

impl ParamSpec {
    pub fn continuous(name: &str, lo: f64, hi: f64, log: bool, role: Role) -> Result<Self> {
        let spec = ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Continuous { lo, hi, log },
            role,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn categorical(name: &str, choices: Vec<f64>, role: Role) -> Result<Self> {
        let spec = ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Categorical { choices },
            role,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reward-weight spec whose range is derived from the default weight.
    pub fn reward_weight_from_default(name: &str, default_weight: f64) -> Result<Self> {
        let (lo, hi) = weight_search_range(default_weight)?;
        ParamSpec::continuous(name, lo, hi, false, Role::RewardWeight)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::domain(
                        &self.name,
                        format!("invalid bounds [{lo}, {hi}]"),
                    ));
                }
                // log scale through or below zero is not supported, including mirrored negatives
                if *log && *lo <= 0.0 {
                    return Err(Error::domain(
                        &self.name,
                        format!("log-scale parameter needs lo > 0, got {lo}"),
                    ));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(Error::domain(&self.name, "empty choice list"));
                }
                if choices.iter().any(|c| !c.is_finite()) {
                    return Err(Error::domain(&self.name, "non-finite choice"));
                }
            }
        }
        Ok(())
    }

    pub fn is_log(&self) -> bool {
        matches!(self.kind, ParamKind::Continuous { log: true, .. })
    }

    /// Maps a unit coordinate to the parameter's value.
    pub fn decode_one(&self, u: f64) -> f64 {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                if u <= 0.0 {
                    return *lo;
                }
                if u >= 1.0 {
                    return *hi;
                }
                let v = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                v.clamp(*lo, *hi)
            }
            ParamKind::Categorical { choices } => {
                let k = choices.len();
                let idx = ((u * k as f64).floor() as usize).min(k - 1);
                choices[idx]
            }
        }
    }

    /// Inverse of [`decode_one`](Self::decode_one); categoricals map to their bin midpoint.
    pub fn encode_one(&self, v: f64) -> Result<f64> {
        match &self.kind {
            ParamKind::Continuous { lo, hi, log } => {
                if !v.is_finite() || v < *lo || v > *hi {
                    return Err(Error::domain(
                        &self.name,
                        format!("value {v} outside [{lo}, {hi}]"),
                    ));
                }
                let u = if *log {
                    (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (v - lo) / (hi - lo)
                };
                Ok(u.clamp(0.0, 1.0))
            }
            ParamKind::Categorical { choices } => {
                let idx = choices
                    .iter()
                    .position(|c| (c - v).abs() <= 1e-9 * c.abs().max(1.0))
                    .ok_or_else(|| {
                        Error::domain(&self.name, format!("value {v} is not one of {choices:?}"))
                    })?;
                Ok((idx as f64 + 0.5) / choices.len() as f64)
            }
        }
    }
}

/// Search range for a reward weight given its default value.
///
/// Non-negative defaults map to `[0, 10^n]` with `n >= 0` the smallest integer
/// such that `w < 10^n`; negative defaults mirror to `[-10^n, 0]` using `|w|`.
pub fn weight_search_range(default_weight: f64) -> Result<(f64, f64)> {
    if !default_weight.is_finite() {
        return Err(Error::domain(
            "default_weight",
            format!("non-finite default weight {default_weight}"),
        ));
    }
    let magnitude = default_weight.abs();
    let mut n = 0i32;
    while magnitude >= 10f64.powi(n) {
        n += 1;
    }
    let bound = 10f64.powi(n);
    if default_weight < 0.0 {
        Ok((-bound, 0.0))
    } else {
        Ok((0.0, bound))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::domain("search_space", "at least one parameter required"));
        }
        for (i, p) in params.iter().enumerate() {
            p.validate()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::domain(&p.name, "duplicate parameter name"));
            }
        }
        Ok(SearchSpace { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Sub-space of the parameters carrying one of `roles`, or `None` if empty.
    pub fn filter_roles(&self, roles: &[Role]) -> Option<SearchSpace> {
        let params: Vec<_> = self
            .params
            .iter()
            .filter(|p| roles.contains(&p.role))
            .cloned()
            .collect();
        (!params.is_empty()).then_some(SearchSpace { params })
    }

    pub fn decode(&self, unit: &[f64]) -> Result<Values> {
        self.check_unit(unit)?;
        Ok(self
            .params
            .iter()
            .zip(unit)
            .map(|(p, &u)| (p.name.clone(), p.decode_one(u)))
            .collect())
    }

    pub fn encode(&self, values: &Values) -> Result<Vec<f64>> {
        self.params
            .iter()
            .map(|p| {
                let v = values
                    .get(&p.name)
                    .ok_or_else(|| Error::domain(&p.name, "missing value"))?;
                p.encode_one(*v)
            })
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let unit: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        Configuration::from_unit(self, unit).expect("uniform sample lies in the unit cube")
    }

    fn check_unit(&self, unit: &[f64]) -> Result<()> {
        if unit.len() != self.dim() {
            return Err(Error::contract(format!(
                "unit vector has {} components, space has {}",
                unit.len(),
                self.dim()
            )));
        }
        if let Some((i, u)) = unit
            .iter()
            .enumerate()
            .find(|(_, u)| !(0.0..=1.0).contains(*u))
        {
            return Err(Error::contract(format!(
                "component {i} ({}) = {u} outside [0, 1]",
                self.params[i].name
            )));
        }
        Ok(())
    }
}

/// A point of a [`SearchSpace`]: its unit coordinates and decoded values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    unit: Vec<f64>,
    values: Values,
    id: ConfigId,
}

impl Configuration {
    pub fn from_unit(space: &SearchSpace, unit: Vec<f64>) -> Result<Self> {
        let values = space.decode(&unit)?;
        let id = ConfigId::of(&unit);
        Ok(Configuration { unit, values, id })
    }

    pub fn unit(&self) -> &[f64] {
        &self.unit
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn id(&self) -> &ConfigId {
        &self.id
    }

    pub fn into_values(self) -> Values {
        self.values
    }
}

/// Stable content hash of a unit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigId(String);

impl ConfigId {
    pub fn of(unit: &[f64]) -> Self {
        let mut hasher = Sha256::new();
        for u in unit {
            hasher.update(u.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        ConfigId(hex::encode(&digest[..8]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
