//! Experiment orchestration: configs, the four arms, journals, the seed
//! protocol and exports.

pub mod campaign;
pub mod config;
pub mod experiment;
pub mod export;
pub mod journal;
pub mod protocol;
pub mod sweep;

pub use campaign::{journal_path, load_run, resume, run_optimization, Campaign, RunOutcome};
pub use config::{Arm, ExperimentConfig, Scaling};
pub use experiment::Experiment;
pub use export::{export, ExportKind};
pub use protocol::{evaluate_incumbents, IncumbentReport};
pub use sweep::{load_sweep, run_sweep};

use std::path::Path;

use crate::error::Result;

pub const CONFIG_FILE: &str = "config.toml";

/// Runs every optimization seed of the protocol, writing the effective config
/// next to the journals.
pub fn optimize_all(exp: &Experiment, dir: &Path) -> Result<Vec<RunOutcome>> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), exp.config.to_toml())?;
    (0..exp.config.protocol.optimization_seeds)
        .map(|k| run_optimization(exp, dir, k))
        .collect()
}

/// Loads the effective config stored in an experiment directory.
pub fn load_experiment(dir: &Path) -> Result<Experiment> {
    Experiment::new(ExperimentConfig::load(&dir.join(CONFIG_FILE), &[])?)
}
