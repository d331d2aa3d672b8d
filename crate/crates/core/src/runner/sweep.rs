//! Landscape sweeps driven by the config's `[landscape]` block.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::landscape::{assemble, make_axis, sweep, GridAxis, LandscapeGrid, SweepRecord};

use super::experiment::{Experiment, DIRECTION};
use super::journal::{read_journal, Header, Journal, JournalWriter, LandscapeRecord, Status};

pub const LANDSCAPE: &str = "landscape";

pub fn landscape_path(dir: &Path) -> PathBuf {
    dir.join("landscape.jsonl")
}

fn axes(exp: &Experiment) -> Result<(GridAxis, GridAxis)> {
    let l = exp
        .config
        .landscape
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [landscape] block".into()))?;
    let spec = |name: &str| {
        exp.setup
            .declared
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("landscape axis {name} is not declared")))
    };
    let a = make_axis(&spec(&l.axis_a)?, l.resolution).map_err(|e| Error::Config(e.to_string()))?;
    let b = make_axis(&spec(&l.axis_b)?, l.resolution).map_err(|e| Error::Config(e.to_string()))?;
    Ok((a, b))
}

/// Trains a full-budget policy at every grid cell for every landscape seed,
/// journaling one record per training.
pub fn run_sweep(exp: &Experiment, dir: &Path) -> Result<LandscapeGrid> {
    let (a, b) = axes(exp)?;
    let n_seeds = exp.config.landscape.as_ref().expect("checked by axes").seeds;
    let seeds: Vec<u64> = (0..n_seeds).map(|s| exp.landscape_seed(s)).collect();
    let header = Header::new(&exp.hash, exp.config.arm.as_str(), LANDSCAPE, None);
    let mut writer = JournalWriter::create(&landscape_path(dir), &header)?;
    let mut seq = 0u64;
    let budget = exp.config.trainer.max_budget;
    sweep(
        &a,
        &b,
        &exp.default_values(),
        &seeds,
        DIRECTION,
        |values, seed| exp.policy_score(values, budget, seed).map(|s| s.task_score),
        |r: &SweepRecord| {
            writer.append(&LandscapeRecord {
                seq,
                index_a: r.index_a,
                index_b: r.index_b,
                values: r.values.clone(),
                seed: r.seed,
                task_score: r.score,
                status: if r.score.is_some() { Status::Ok } else { Status::Failed },
            })?;
            seq += 1;
            Ok(())
        },
    )
}

/// Rebuilds the grid from `landscape.jsonl`.
pub fn load_sweep(exp: &Experiment, dir: &Path) -> Result<LandscapeGrid> {
    let path = landscape_path(dir);
    if !path.exists() {
        return Err(Error::MissingData(format!("{} does not exist; run `sweep` first", path.display())));
    }
    let journal: Journal<LandscapeRecord> = read_journal(&path)?;
    if journal.header.config_hash != exp.hash {
        return Err(Error::ConfigMismatch {
            path,
            expected: exp.hash.clone(),
            found: journal.header.config_hash,
        });
    }
    let (a, b) = axes(exp)?;
    let records: Vec<SweepRecord> = journal
        .records
        .into_iter()
        .map(|r| SweepRecord {
            index_a: r.index_a,
            index_b: r.index_b,
            values: r.values,
            seed: r.seed,
            score: r.task_score,
        })
        .collect();
    if let Some(i) = records
        .iter()
        .position(|r| r.index_a >= a.resolution() || r.index_b >= b.resolution())
    {
        return Err(Error::Integrity {
            path: journal.path,
            line: i + 2,
            message: "record outside the configured grid".into(),
        });
    }
    Ok(assemble(&a, &b, &exp.default_values(), DIRECTION, &records))
}
