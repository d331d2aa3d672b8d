use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ascending training-step budgets, each `eta` times the previous one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLadder {
    budgets: Vec<u64>,
    eta: u64,
}

impl BudgetLadder {
    pub fn budgets(&self) -> &[u64] {
        &self.budgets
    }

    pub fn eta(&self) -> u64 {
        self.eta
    }

    pub fn num_rungs(&self) -> usize {
        self.budgets.len()
    }

    pub fn max_budget(&self) -> u64 {
        *self.budgets.last().expect("ladder is non-empty")
    }

    pub fn level_of(&self, budget: u64) -> Option<usize> {
        self.budgets.iter().position(|&b| b == budget)
    }
}

/// Builds the ladder `[max / eta^(rungs-1), ..., max / eta, max]`.
///
/// Each rung is the next rung integer-divided by `eta`.
pub fn budget_ladder(max_budget: u64, eta: u64, num_rungs: usize) -> Result<BudgetLadder> {
    if eta < 2 {
        return Err(Error::domain("eta", format!("eta must be >= 2, got {eta}")));
    }
    if num_rungs == 0 {
        return Err(Error::domain("num_rungs", "at least one rung required"));
    }
    let min_needed = u32::try_from(num_rungs - 1)
        .ok()
        .and_then(|e| eta.checked_pow(e));
    match min_needed {
        Some(m) if max_budget >= m && max_budget > 0 => {}
        _ => {
            return Err(Error::domain(
                "max_budget",
                format!("{max_budget} is too small for {num_rungs} rungs at eta {eta}"),
            ))
        }
    }
    let mut budgets = vec![max_budget];
    for _ in 1..num_rungs {
        let next = budgets.last().unwrap() / eta;
        budgets.push(next);
    }
    budgets.reverse();
    Ok(BudgetLadder { budgets, eta })
}

/// One rung of a bracket: `count` configurations evaluated at `budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    /// Index into the ladder.
    pub level: usize,
    pub budget: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub rungs: Vec<Rung>,
}

impl Bracket {
    /// Training steps consumed by running this bracket to completion.
    pub fn total_steps(&self) -> u64 {
        self.rungs.iter().map(|r| r.budget * r.count as u64).sum()
    }
}

/// HyperBand schedule for a ladder, most aggressive bracket first.
///
/// Bracket `s` starts `ceil((s_max + 1) / (s + 1) * eta^s)` configurations at
/// ladder level `s_max - s` and keeps the top `floor(n / eta)` at each promotion.
pub fn hyperband_brackets(ladder: &BudgetLadder) -> Vec<Bracket> {
    let s_max = ladder.num_rungs() - 1;
    let eta = ladder.eta();
    (0..=s_max)
        .rev()
        .map(|s| {
            let numerator = (s_max as u64 + 1) * eta.pow(s as u32);
            let mut n = numerator.div_ceil(s as u64 + 1) as usize;
            let rungs = (0..=s)
                .map(|i| {
                    let level = s_max - s + i;
                    let rung = Rung {
                        level,
                        budget: ladder.budgets()[level],
                        count: n,
                    };
                    n /= eta as usize;
                    rung
                })
                .collect();
            Bracket { s, rungs }
        })
        .collect()
}
