//! One optimization run: DEHB plus journal, with replay-based resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dehb::{Ask, Dehb, Incumbent, Job, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::metrics::fitness;
use crate::space::Values;

use super::experiment::Experiment;
use super::journal::{read_journal, EvalRecord, Header, Journal, JournalWriter, Status};

pub const OPTIMIZATION: &str = "optimization";

pub fn journal_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("opt-{k}.jsonl"))
}

#[derive(Debug, Clone)]
struct Issued {
    job: Job,
    values: Values,
}

/// Result of a finished (or replayed) optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub optimization_seed: usize,
    pub incumbent: Option<Incumbent>,
    /// Full parameter values of the incumbent evaluation.
    pub incumbent_values: Option<Values>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub evaluations: usize,
    pub exhausted: bool,
}

pub struct Campaign<'e> {
    exp: &'e Experiment,
    k: usize,
    dehb: Dehb,
    sampler: ChaCha8Rng,
    issued: BTreeMap<u64, Issued>,
    records: Vec<EvalRecord>,
    exhausted: bool,
}

impl<'e> Campaign<'e> {
    pub fn new(exp: &'e Experiment, k: usize) -> Result<Self> {
        let space = exp
            .setup
            .optimized
            .clone()
            .ok_or_else(|| Error::Config("nothing to optimize".into()))?;
        let dehb = Dehb::new(space, exp.config.ladder()?, exp.config.dehb_settings(), exp.optimizer_seed(k))?;
        Ok(Campaign {
            exp,
            k,
            dehb,
            sampler: ChaCha8Rng::seed_from_u64(exp.sampler_seed(k)),
            issued: BTreeMap::new(),
            records: Vec::new(),
            exhausted: false,
        })
    }

    pub fn dehb(&self) -> &Dehb {
        &self.dehb
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    /// Issues asks until the optimizer waits or runs out of budget.
    fn fill(&mut self) -> Result<()> {
        while !self.exhausted {
            match self.dehb.ask()? {
                Ask::Run(job) => {
                    let mut values = self.exp.setup.frozen.clone();
                    values.extend(job.config.values().iter().map(|(k, v)| (k.clone(), *v)));
                    if let Some(sampled) = &self.exp.setup.sampled {
                        values.extend(sampled.sample_uniform(&mut self.sampler).into_values());
                    }
                    self.issued.insert(job.ticket, Issued { job, values });
                }
                Ask::Wait => break,
                Ask::Exhausted => self.exhausted = true,
            }
        }
        Ok(())
    }

    fn evaluate(&self, issued: &Issued) -> EvalRecord {
        let start = Instant::now();
        let seeds = self.exp.fitness_seeds(self.k, issued.job.ticket);
        let report = fitness(&seeds, |s| self.exp.seed_fitness(&issued.values, issued.job.budget, s))
            .expect("seed list is non-empty");
        let duration = start.elapsed().as_secs_f64();
        EvalRecord {
            seq: 0,
            ticket: issued.job.ticket,
            config_id: issued.job.config.id().as_str().to_string(),
            unit: issued.job.config.unit().to_vec(),
            values: issued.values.clone(),
            budget: issued.job.budget,
            seeds: report.seeds,
            status: if report.fitness.is_some() { Status::Ok } else { Status::Failed },
            per_seed: report.per_seed,
            fitness: report.fitness,
            duration_secs: self.exp.config.record_wall_clock.then_some(duration),
        }
    }

    fn tell(&mut self, mut record: EvalRecord) -> Result<EvalRecord> {
        let issued = self
            .issued
            .remove(&record.ticket)
            .ok_or_else(|| Error::contract(format!("ticket {} was not issued", record.ticket)))?;
        self.dehb.tell(&issued.job, record.fitness)?;
        record.seq = self.records.len() as u64;
        self.records.push(record.clone());
        Ok(record)
    }

    /// Feeds journaled results back through the optimizer, checking that each
    /// record matches what the optimizer asks for.
    pub fn replay(&mut self, journal: &Journal<EvalRecord>) -> Result<()> {
        let space = self.dehb.space().clone();
        for (i, record) in journal.records.iter().enumerate() {
            let line = i + 2;
            let fail = |message: String| Error::Integrity {
                path: journal.path.clone(),
                line,
                message,
            };
            if record.seq != i as u64 {
                return Err(fail(format!("expected seq {i}, found {}", record.seq)));
            }
            record.check().map_err(fail)?;
            let decoded = space.decode(&record.unit).map_err(|e| fail(e.to_string()))?;
            if !values_match(&decoded, &record.values, false) {
                return Err(fail("stored values do not match the decoded unit vector".into()));
            }
            while !self.issued.contains_key(&record.ticket) {
                let before = self.issued.len();
                self.fill()?;
                if self.issued.len() == before {
                    break;
                }
            }
            let issued = self
                .issued
                .get(&record.ticket)
                .ok_or_else(|| fail(format!("ticket {} is not part of the optimizer's schedule", record.ticket)))?;
            if issued.job.config.id().as_str() != record.config_id
                || issued.job.budget != record.budget
                || !values_match(&issued.values, &record.values, true)
            {
                return Err(fail("record differs from the configuration the optimizer asked for".into()));
            }
            self.tell(record.clone())?;
        }
        Ok(())
    }

    pub fn outcome(&self) -> RunOutcome {
        let incumbent = self.dehb.incumbent().cloned();
        let incumbent_values = incumbent
            .as_ref()
            .map(|inc| self.records[inc.evaluation - 1].values.clone());
        RunOutcome {
            optimization_seed: self.k,
            incumbent,
            incumbent_values,
            trajectory: self.dehb.incumbent_trajectory(),
            evaluations: self.records.len(),
            exhausted: self.exhausted && self.issued.is_empty(),
        }
    }

    /// Runs until the budget is consumed, appending each record to `writer`.
    pub fn drive(&mut self, writer: &mut JournalWriter) -> Result<()> {
        loop {
            self.fill()?;
            if self.issued.is_empty() {
                return Ok(());
            }
            let batch: Vec<Issued> = self.issued.values().cloned().collect();
            let results: Vec<EvalRecord> = if batch.len() == 1 {
                vec![self.evaluate(&batch[0])]
            } else {
                batch.par_iter().map(|i| self.evaluate(i)).collect()
            };
            for r in results {
                let r = self.tell(r)?;
                writer.append(&r)?;
            }
        }
    }
}

/// Compares value maps: every key of `subset` must be in `full` with an equal
/// value (to 1e-12 relative); with `exact_keys` the key sets must also agree.
fn values_match(subset: &Values, full: &Values, exact_keys: bool) -> bool {
    if exact_keys && subset.len() != full.len() {
        return false;
    }
    subset.iter().all(|(k, a)| {
        full.get(k)
            .is_some_and(|b| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0))
    })
}

fn header(exp: &Experiment, k: usize) -> Header {
    Header::new(&exp.hash, exp.config.arm.as_str(), OPTIMIZATION, Some(k))
}

fn check_header(exp: &Experiment, k: usize, journal: &Journal<EvalRecord>) -> Result<()> {
    let h = &journal.header;
    if h.config_hash != exp.hash {
        return Err(Error::ConfigMismatch {
            path: journal.path.clone(),
            expected: exp.hash.clone(),
            found: h.config_hash.clone(),
        });
    }
    if h.contents != OPTIMIZATION || h.optimization_seed != Some(k) {
        return Err(Error::Integrity {
            path: journal.path.clone(),
            line: 1,
            message: format!("not the optimization journal of seed {k}"),
        });
    }
    Ok(())
}

/// Replays an existing journal without running anything.
pub fn load_run<'e>(exp: &'e Experiment, dir: &Path, k: usize) -> Result<Campaign<'e>> {
    let path = journal_path(dir, k);
    if !path.exists() {
        return Err(Error::MissingData(format!("{} does not exist", path.display())));
    }
    let journal: Journal<EvalRecord> = read_journal(&path)?;
    check_header(exp, k, &journal)?;
    let mut campaign = Campaign::new(exp, k)?;
    campaign.replay(&journal)?;
    Ok(campaign)
}

/// Runs optimization seed `k` from scratch, overwriting any journal.
pub fn run_optimization(exp: &Experiment, dir: &Path, k: usize) -> Result<RunOutcome> {
    let mut writer = JournalWriter::create(&journal_path(dir, k), &header(exp, k))?;
    let mut campaign = Campaign::new(exp, k)?;
    campaign.drive(&mut writer)?;
    Ok(campaign.outcome())
}

/// Continues optimization seed `k` from its journal (starting fresh if there
/// is none). A complete journal is left untouched.
pub fn resume(exp: &Experiment, dir: &Path, k: usize) -> Result<RunOutcome> {
    let path = journal_path(dir, k);
    if !path.exists() {
        return run_optimization(exp, dir, k);
    }
    let journal: Journal<EvalRecord> = read_journal(&path)?;
    check_header(exp, k, &journal)?;
    let mut campaign = Campaign::new(exp, k)?;
    campaign.replay(&journal)?;
    let mut writer = JournalWriter::reopen(&path, journal.valid_len)?;
    campaign.drive(&mut writer)?;
    Ok(campaign.outcome())
}
