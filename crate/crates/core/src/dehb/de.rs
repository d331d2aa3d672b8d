//! Differential-evolution operators (rand/1/bin) and per-budget subpopulations.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub unit: Vec<f64>,
    /// Maximization convention; failed evaluations hold `-inf`.
    pub fitness: f64,
}

impl Member {
    pub fn failed(&self) -> bool {
        self.fitness == f64::NEG_INFINITY
    }
}

/// Members evaluated at one ladder level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subpopulation {
    pub level: usize,
    pub budget: u64,
    pub capacity: usize,
    pub members: Vec<Member>,
}

impl Subpopulation {
    pub fn new(level: usize, budget: u64, capacity: usize) -> Self {
        Subpopulation {
            level,
            budget,
            capacity,
            members: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of the worst member; the last one wins ties.
    pub fn worst(&self) -> Option<usize> {
        self.members
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.fitness.total_cmp(&b.fitness).then(j.cmp(i)))
            .map(|(i, _)| i)
    }

    /// Adds a member, evicting the worst one once the subpopulation is full.
    pub fn inject(&mut self, member: Member) {
        if self.members.len() < self.capacity {
            self.members.push(member);
        } else if let Some(w) = self.worst() {
            self.members[w] = member;
        }
    }

    /// DE selection: the trial takes the target's slot iff it is at least as fit.
    pub fn select(&mut self, target: usize, trial: Member) -> bool {
        match self.members.get_mut(target) {
            Some(slot) if trial.fitness >= slot.fitness => {
                *slot = trial;
                true
            }
            Some(_) => false,
            None => {
                self.inject(trial);
                true
            }
        }
    }

    pub fn units(&self) -> Vec<&[f64]> {
        self.members.iter().map(|m| m.unit.as_slice()).collect()
    }
}

/// `base + f * (a - b)`, clipped into the unit cube.
pub fn mutate_with(base: &[f64], a: &[f64], b: &[f64], f: f64) -> Vec<f64> {
    base.iter()
        .zip(a.iter().zip(b))
        .map(|(x, (y, z))| (x + f * (y - z)).clamp(0.0, 1.0))
        .collect()
}

/// rand/1 mutation over `pop`.
///
/// Three distinct parents are drawn without replacement; when fewer than three
/// members exist, the missing parents are drawn uniformly from the unit cube.
pub fn de_mutate<R: Rng + ?Sized>(pop: &[&[f64]], dim: usize, f: f64, rng: &mut R) -> Result<Vec<f64>> {
    if pop.is_empty() {
        return Err(Error::contract("mutation needs a non-empty population"));
    }
    if pop.iter().any(|m| m.len() != dim) {
        return Err(Error::contract("population member has the wrong dimension"));
    }
    let mut parents: Vec<Vec<f64>> = if pop.len() >= 3 {
        index::sample(rng, pop.len(), 3)
            .into_iter()
            .map(|i| pop[i].to_vec())
            .collect()
    } else {
        index::sample(rng, pop.len(), pop.len())
            .into_iter()
            .map(|i| pop[i].to_vec())
            .collect()
    };
    while parents.len() < 3 {
        parents.push((0..dim).map(|_| rng.random::<f64>()).collect());
    }
    Ok(mutate_with(&parents[0], &parents[1], &parents[2], f))
}

/// Binomial crossover: each coordinate comes from the donor with probability
/// `p_cross`, and one uniformly chosen coordinate always does.
pub fn de_crossover<R: Rng + ?Sized>(
    target: &[f64],
    donor: &[f64],
    p_cross: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if target.len() != donor.len() || target.is_empty() {
        return Err(Error::contract(format!(
            "crossover dimension mismatch: target {} vs donor {}",
            target.len(),
            donor.len()
        )));
    }
    if !(0.0..=1.0).contains(&p_cross) {
        return Err(Error::contract(format!("p_cross {p_cross} outside [0, 1]")));
    }
    let j_rand = rng.random_range(0..target.len());
    Ok(target
        .iter()
        .zip(donor)
        .enumerate()
        .map(|(j, (&t, &d))| {
            let take = rng.random::<f64>() < p_cross;
            if take || j == j_rand {
                d
            } else {
                t
            }
        })
        .collect())
}
