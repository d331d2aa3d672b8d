#![allow(dead_code)]

use shapetune::runner::{Experiment, ExperimentConfig};

/// Small, fast experiment: short episodes and a 900-step full training.
pub const TINY: &str = r#"
version = 1
arm = "combined"
master_seed = 11

[environment.lander]
max_steps = 60

[trainer]
max_budget = 900
eval_episodes = 2
baseline = { learning_rate = 0.02, discounting = 0.02, entropy_coef = 0.0, batch_size = 100 }

[[space.params]]
name = "learning_rate"
role = "hyperparameter"
lo = 0.001
hi = 0.1
log = true

[[space.params]]
name = "batch_size"
role = "hyperparameter"
choices = [50.0, 100.0, 200.0]

[[space.params]]
name = "dist"
role = "reward_weight"
default = 100.0

[[space.params]]
name = "vel"
role = "reward_weight"
default = 100.0

[[space.params]]
name = "alpha"
role = "reward_scale"
lo = 0.5
hi = 2.0
log = true

[optimizer]
eta = 3
rungs = 3
total_budget = 4.0
seeds_per_fitness = 2

[protocol]
optimization_seeds = 2
evaluation_seeds = 3

[landscape]
axis_a = "learning_rate"
axis_b = "vel"
resolution = 4
seeds = 2
"#;

pub fn tiny(overrides: &[&str]) -> Experiment {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Experiment::new(ExperimentConfig::from_toml_with(TINY, &o).unwrap()).unwrap()
}
