//! Shaped reward `alpha * (r + f^w)` over named reward components.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ParamKind, Role, SearchSpace, Values};

/// Name of the reward-scale parameter inside a [`Values`] map.
pub const ALPHA: &str = "alpha";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Declaration of one shaping component of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub sign: Sign,
    /// Unweighted components (e.g. fuel) enter the sum with weight 1 and are never optimized.
    #[serde(default = "default_true")]
    pub weighted: bool,
    #[serde(default)]
    pub default_weight: f64,
}

fn default_true() -> bool {
    true
}

impl ComponentSpec {
    pub fn weighted(name: &str, sign: Sign, default_weight: f64) -> Self {
        ComponentSpec {
            name: name.to_string(),
            sign,
            weighted: true,
            default_weight,
        }
    }

    pub fn unweighted(name: &str, sign: Sign) -> Self {
        ComponentSpec {
            name: name.to_string(),
            sign,
            weighted: false,
            default_weight: 1.0,
        }
    }
}

/// Per-step reward decomposition emitted by an environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// Sparse/terminal reward; never weighted.
    pub base: f64,
    /// Unsigned per-step component magnitudes.
    pub shaping: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub alpha: f64,
    pub weights: BTreeMap<String, f64>,
}

impl RewardParams {
    pub fn new(alpha: f64, weights: BTreeMap<String, f64>) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(ALPHA, format!("reward scale must be positive, got {alpha}")));
        }
        Ok(RewardParams { alpha, weights })
    }

    /// `alpha = 1` with every weighted component at its default.
    pub fn defaults(components: &[ComponentSpec]) -> Self {
        RewardParams {
            alpha: 1.0,
            weights: components
                .iter()
                .filter(|c| c.weighted)
                .map(|c| (c.name.clone(), c.default_weight))
                .collect(),
        }
    }

    /// Reads weights and alpha from a value map, falling back to defaults for
    /// anything absent. A missing `alpha` means `alpha = 1`.
    pub fn from_values(values: &Values, components: &[ComponentSpec]) -> Result<Self> {
        let mut params = RewardParams::defaults(components);
        for (name, w) in params.weights.iter_mut() {
            if let Some(v) = values.get(name) {
                *w = *v;
            }
        }
        params.alpha = values.get(ALPHA).copied().unwrap_or(1.0);
        RewardParams::new(params.alpha, params.weights)
    }

    pub fn weight_vector(&self, components: &[ComponentSpec]) -> Result<Vec<f64>> {
        components
            .iter()
            .filter(|c| c.weighted)
            .map(|c| {
                self.weights
                    .get(&c.name)
                    .copied()
                    .ok_or_else(|| Error::domain(&c.name, "missing reward weight"))
            })
            .collect()
    }

    /// Replaces the weights by their explicitly scaled counterparts.
    pub fn explicitly_scaled(&self, components: &[ComponentSpec]) -> Result<Self> {
        let w = self.weight_vector(components)?;
        let defaults: Vec<f64> = components
            .iter()
            .filter(|c| c.weighted)
            .map(|c| c.default_weight)
            .collect();
        let scaled = explicit_scale(&w, &defaults)?;
        let weights = components
            .iter()
            .filter(|c| c.weighted)
            .zip(scaled)
            .map(|(c, v)| (c.name.clone(), v))
            .collect();
        Ok(RewardParams {
            alpha: self.alpha,
            weights,
        })
    }
}

/// `alpha * (base + sum_i sign_i * w_i * f_i)`, with unweighted components at weight 1.
pub fn shaped_reward(
    components: &RewardComponents,
    params: &RewardParams,
    decls: &[ComponentSpec],
) -> Result<f64> {
    let mut total = components.base;
    for decl in decls {
        let magnitude = components.shaping.get(&decl.name).copied().unwrap_or(0.0);
        let weight = if decl.weighted {
            *params
                .weights
                .get(&decl.name)
                .ok_or_else(|| Error::domain(&decl.name, "missing reward weight"))?
        } else {
            1.0
        };
        total += decl.sign.factor() * weight * magnitude;
    }
    Ok(params.alpha * total)
}

/// Rescales `w` to the L1 norm of the default weights, keeping its direction.
pub fn explicit_scale(w: &[f64], w_hat: &[f64]) -> Result<Vec<f64>> {
    let norm: f64 = w.iter().map(|x| x.abs()).sum();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let target: f64 = w_hat.iter().map(|x| x.abs()).sum();
    Ok(w.iter().map(|x| target * x / norm).collect())
}

/// Implicit-scaling variant of a space: reward-weight ranges are multiplied by
/// `norm_upper` and the reward scale is removed (frozen at 1).
pub fn implicit_ranges(space: &SearchSpace, norm_upper: f64) -> Result<SearchSpace> {
    if !(norm_upper > 0.0) || !norm_upper.is_finite() {
        return Err(Error::domain("norm_upper", format!("must be positive, got {norm_upper}")));
    }
    let params = space
        .params()
        .iter()
        .filter(|p| p.role != Role::RewardScale)
        .cloned()
        .map(|mut p| {
            if p.role == Role::RewardWeight {
                if let ParamKind::Continuous { lo, hi, .. } = &mut p.kind {
                    *lo *= norm_upper;
                    *hi *= norm_upper;
                }
            }
            p
        })
        .collect();
    SearchSpace::new(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParamSpec;
    use proptest::prelude::*;

    fn lander_decls() -> Vec<ComponentSpec> {
        vec![
            ComponentSpec::weighted("dist", Sign::Positive, 100.0),
            ComponentSpec::weighted("vel", Sign::Negative, 100.0),
            ComponentSpec::weighted("tilt", Sign::Negative, 100.0),
            ComponentSpec::weighted("contact", Sign::Positive, 10.0),
            ComponentSpec::unweighted("fuel", Sign::Negative),
        ]
    }

    fn zero_weights() -> RewardParams {
        let mut p = RewardParams::defaults(&lander_decls());
        p.weights.values_mut().for_each(|w| *w = 0.0);
        p
    }

    fn components(base: f64, pairs: &[(&str, f64)]) -> RewardComponents {
        RewardComponents {
            base,
            shaping: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn shaping_off_returns_terminal() {
        let c = components(100.0, &[("fuel", 0.0), ("dist", 0.3), ("vel", 2.0)]);
        assert_eq!(shaped_reward(&c, &zero_weights(), &lander_decls()).unwrap(), 100.0);
    }

    #[test]
    fn distance_term_hand_arithmetic() {
        let mut p = zero_weights();
        p.weights.insert("dist".into(), 100.0);
        let c = components(0.0, &[("dist", 0.02)]);
        assert!((shaped_reward(&c, &p, &lander_decls()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn signs_and_unweighted_fuel() {
        let p = RewardParams::defaults(&lander_decls());
        let c = components(
            -100.0,
            &[("dist", 0.1), ("vel", 0.2), ("tilt", 0.05), ("contact", 1.0), ("fuel", 0.3)],
        );
        let expected = -100.0 + 100.0 * 0.1 - 100.0 * 0.2 - 100.0 * 0.05 + 10.0 * 1.0 - 0.3;
        assert!((shaped_reward(&c, &p, &lander_decls()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn alpha_is_linear() {
        let c = components(3.0, &[("dist", 0.1), ("vel", 0.4), ("fuel", 0.2)]);
        let one = RewardParams::defaults(&lander_decls());
        let mut two = one.clone();
        two.alpha = 2.0;
        let a = shaped_reward(&c, &one, &lander_decls()).unwrap();
        let b = shaped_reward(&c, &two, &lander_decls()).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn missing_weight_names_component() {
        let mut p = RewardParams::defaults(&lander_decls());
        p.weights.remove("tilt");
        let err = shaped_reward(&components(0.0, &[]), &p, &lander_decls()).unwrap_err();
        assert!(err.to_string().contains("tilt"));
    }

    #[test]
    fn weight_slope_is_constant() {
        let c = components(1.0, &[("vel", 0.37), ("dist", 0.1)]);
        let at = |w: f64| {
            let mut p = RewardParams::defaults(&lander_decls());
            p.weights.insert("vel".into(), w);
            shaped_reward(&c, &p, &lander_decls()).unwrap()
        };
        let s1 = at(1.0) - at(0.0);
        let s2 = at(501.0) - at(500.0);
        assert!((s1 - s2).abs() < 1e-9);
        assert!((s1 + 0.37).abs() < 1e-12);
    }

    #[test]
    fn explicit_scale_examples() {
        let w = explicit_scale(&[2.0, 2.0, 1.0], &[1.0, 1.0, 0.5]).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 0.5]);
        let fixed = explicit_scale(&[1.0, 1.0, 0.5], &[1.0, 1.0, 0.5]).unwrap();
        assert_eq!(fixed, vec![1.0, 1.0, 0.5]);
        let humanoid = explicit_scale(&[6.35, 0.0, 0.0], &[1.25, 5.0, 0.1]).unwrap();
        assert!((humanoid[0] - 6.35).abs() < 1e-12);
        assert_eq!(&humanoid[1..], &[0.0, 0.0]);
        assert!(matches!(explicit_scale(&[0.0, 0.0], &[1.0]), Err(Error::DegenerateWeights)));
    }

    fn weight_space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::continuous("w_dist", 0.0, 10.0, false, Role::RewardWeight).unwrap(),
            ParamSpec::continuous("w_force", 0.0, 1.0, false, Role::RewardWeight).unwrap(),
            ParamSpec::continuous(ALPHA, 0.0, 10.0, false, Role::RewardScale).unwrap(),
            ParamSpec::continuous("learning_rate", 1e-6, 0.01, true, Role::Hyperparameter).unwrap(),
        ])
        .unwrap()
    }

    fn bounds(space: &SearchSpace, name: &str) -> (f64, f64) {
        match space.get(name).unwrap().kind {
            ParamKind::Continuous { lo, hi, .. } => (lo, hi),
            _ => unreachable!(),
        }
    }

    #[test]
    fn implicit_ranges_examples() {
        let ant = implicit_ranges(&weight_space(), 2.5).unwrap();
        assert_eq!(bounds(&ant, "w_dist"), (0.0, 25.0));
        assert_eq!(bounds(&ant, "w_force"), (0.0, 2.5));
        assert!(ant.get(ALPHA).is_none());
        assert_eq!(bounds(&ant, "learning_rate"), (1e-6, 0.01));
        let humanoid = implicit_ranges(&weight_space(), 6.35).unwrap();
        assert_eq!(bounds(&humanoid, "w_force"), (0.0, 6.35));
        assert!((bounds(&humanoid, "w_dist").1 - 63.5).abs() < 1e-12);
        let same = implicit_ranges(&weight_space(), 1.0).unwrap();
        assert_eq!(same.dim(), 3);
        assert_eq!(bounds(&same, "w_dist"), (0.0, 10.0));
        assert!(implicit_ranges(&weight_space(), 0.0).is_err());
    }

    #[test]
    fn from_values_defaults_alpha_to_one() {
        let values: Values = [("vel".to_string(), 7.0)].into_iter().collect();
        let p = RewardParams::from_values(&values, &lander_decls()).unwrap();
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.weights["vel"], 7.0);
        assert_eq!(p.weights["dist"], 100.0);
        assert!(!p.weights.contains_key("fuel"));
    }

    proptest! {
        #[test]
        fn explicit_scale_preserves_norm(w in prop::collection::vec(0.0f64..100.0, 3), hat in prop::sample::select(vec![2.5, 6.35])) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let scaled = explicit_scale(&w, &[hat]).unwrap();
            let norm: f64 = scaled.iter().map(|x| x.abs()).sum();
            prop_assert!((norm - hat).abs() <= 1e-12);
        }
    }
}
