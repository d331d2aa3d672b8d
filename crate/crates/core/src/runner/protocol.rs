//! Incumbent evaluation and the per-arm report.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate_experiment, Aggregate};
use crate::space::Values;

use super::campaign::load_run;
use super::experiment::Experiment;
use super::journal::{Header, IncumbentEvalRecord, JournalWriter, Status};

pub const EVALUATION: &str = "evaluation";

pub fn evaluation_path(dir: &Path) -> PathBuf {
    dir.join("evaluation.jsonl")
}

pub fn report_path(dir: &Path) -> PathBuf {
    dir.join("report.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentSummary {
    pub optimization_seed: usize,
    pub config_id: String,
    pub values: Values,
    pub fitness: f64,
    pub task_scores: Vec<Option<f64>>,
    pub default_shaped_returns: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentReport {
    pub arm: String,
    pub config_hash: String,
    pub incumbents: Vec<IncumbentSummary>,
    /// Aggregate of task scores (landing steps, lower is better).
    pub task_score: Aggregate,
    pub default_shaped_return: Aggregate,
    pub evaluation_trainings: usize,
    pub failed_trainings: usize,
}

impl IncumbentReport {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = report_path(dir);
        let text = std::fs::read_to_string(&path)
            .map_err(|_| Error::MissingData(format!("{} does not exist; run `evaluate` first", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trains every incumbent `evaluation_seeds` times at the full budget, journals
/// each training and writes `report.json`.
pub fn evaluate_incumbents(exp: &Experiment, dir: &Path) -> Result<IncumbentReport> {
    let n_opt = exp.config.protocol.optimization_seeds;
    let n_eval = exp.config.protocol.evaluation_seeds;
    let mut incumbents = Vec::with_capacity(n_opt);
    for k in 0..n_opt {
        let run = load_run(exp, dir, k).map_err(|e| match e {
            Error::MissingData(_) => Error::MissingIncumbent(k),
            other => other,
        })?;
        let outcome = run.outcome();
        match (outcome.incumbent, outcome.incumbent_values) {
            (Some(inc), Some(values)) => incumbents.push((inc, values)),
            _ => return Err(Error::MissingIncumbent(k)),
        }
    }
    let jobs: Vec<(usize, usize)> = (0..n_opt).flat_map(|k| (0..n_eval).map(move |i| (k, i))).collect();
    let budget = exp.config.trainer.max_budget;
    let records: Vec<IncumbentEvalRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(seq, &(k, i))| {
            let (inc, values) = &incumbents[k];
            let seed = exp.evaluation_seed(k, i);
            let score = exp.policy_score(values, budget, seed).ok();
            IncumbentEvalRecord {
                seq: seq as u64,
                optimization_seed: k,
                evaluation_index: i,
                seed,
                config_id: inc.config.id().as_str().to_string(),
                values: values.clone(),
                task_score: score.map(|s| s.task_score),
                default_shaped_return: score.map(|s| s.default_shaped_return),
                status: if score.is_some() { Status::Ok } else { Status::Failed },
            }
        })
        .collect();
    let header = Header::new(&exp.hash, exp.config.arm.as_str(), EVALUATION, None);
    let mut writer = JournalWriter::create(&evaluation_path(dir), &header)?;
    for r in &records {
        writer.append(r)?;
    }
    let report = build_report(exp, &incumbents, &records)?;
    std::fs::write(report_path(dir), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn build_report(
    exp: &Experiment,
    incumbents: &[(crate::dehb::Incumbent, Values)],
    records: &[IncumbentEvalRecord],
) -> Result<IncumbentReport> {
    let summaries: Vec<IncumbentSummary> = incumbents
        .iter()
        .enumerate()
        .map(|(k, (inc, values))| {
            let mine: Vec<&IncumbentEvalRecord> = records.iter().filter(|r| r.optimization_seed == k).collect();
            IncumbentSummary {
                optimization_seed: k,
                config_id: inc.config.id().as_str().to_string(),
                values: values.clone(),
                fitness: inc.fitness,
                task_scores: mine.iter().map(|r| r.task_score).collect(),
                default_shaped_returns: mine.iter().map(|r| r.default_shaped_return).collect(),
            }
        })
        .collect();
    let successful = |pick: fn(&IncumbentSummary) -> &Vec<Option<f64>>| -> Result<Vec<Vec<f64>>> {
        summaries
            .iter()
            .map(|s| {
                let ok: Vec<f64> = pick(s).iter().flatten().copied().collect();
                if ok.is_empty() {
                    Err(Error::EvaluationFailed(format!(
                        "every evaluation training of optimization seed {} failed",
                        s.optimization_seed
                    )))
                } else {
                    Ok(ok)
                }
            })
            .collect()
    };
    let est = exp.config.optimizer.std_estimator;
    let task_score = aggregate_experiment(&successful(|s| &s.task_scores)?, est)?;
    let default_shaped_return = aggregate_experiment(&successful(|s| &s.default_shaped_returns)?, est)?;
    Ok(IncumbentReport {
        arm: exp.config.arm.as_str().to_string(),
        config_hash: exp.hash.clone(),
        incumbents: summaries,
        task_score,
        default_shaped_return,
        evaluation_trainings: records.len(),
        failed_trainings: records.iter().filter(|r| r.status == Status::Failed).count(),
    })
}
