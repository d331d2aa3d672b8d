//! Joint tuning of RL hyperparameters and reward-shaping weights with a
//! multi-fidelity differential-evolution optimizer.

pub mod dehb;
pub mod error;
pub mod lander;
pub mod landscape;
pub mod metrics;
pub mod runner;
pub mod seeding;
pub mod shaping;
pub mod space;
pub mod trainer;

pub use error::{Error, Result};
pub use metrics::Direction;
pub use space::{Configuration, ParamSpec, Role, SearchSpace, Values};
