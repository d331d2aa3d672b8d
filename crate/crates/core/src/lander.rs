//! A small 2D landing task with a decomposed shaped reward.
//!
//! The probe is a point mass with attitude. The main engine pushes along the
//! body axis, the side engine applies torque. The episode ends at the first
//! ground contact (landed or crashed), on leaving the arena, or at the step cap.
//! The task score is the number of steps to a safe touchdown; every failure
//! scores the step cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Direction;
use crate::shaping::{shaped_reward, ComponentSpec, RewardComponents, RewardParams, Sign};
use crate::trainer::{Environment, Transition};

pub const DIST: &str = "dist";
pub const VEL: &str = "vel";
pub const TILT: &str = "tilt";
pub const CONTACT: &str = "contact";
pub const FUEL: &str = "fuel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanderConfig {
    pub gravity: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// Acceleration at full main throttle.
    pub main_accel: f64,
    /// Angular acceleration at full side throttle.
    pub side_angular_accel: f64,
    pub spawn_height: f64,
    /// Initial x is uniform in `[-spawn_jitter, spawn_jitter]`.
    pub spawn_jitter: f64,
    /// Initial velocity components are uniform in `[-spawn_velocity, spawn_velocity]`.
    pub spawn_velocity: f64,
    pub pad_half_width: f64,
    pub leg_span: f64,
    pub safe_speed: f64,
    pub safe_tilt: f64,
    pub landing_bonus: f64,
    pub crash_penalty: f64,
    pub arena_half_width: f64,
    pub ceiling: f64,
    pub fuel_main: f64,
    pub fuel_side: f64,
}

impl Default for LanderConfig {
    fn default() -> Self {
        LanderConfig {
            gravity: 1.62,
            dt: 0.05,
            max_steps: 1000,
            main_accel: 4.0,
            side_angular_accel: 3.0,
            spawn_height: 1.5,
            spawn_jitter: 0.5,
            spawn_velocity: 0.1,
            pad_half_width: 0.3,
            leg_span: 0.1,
            safe_speed: 0.5,
            safe_tilt: 0.25,
            landing_bonus: 100.0,
            crash_penalty: 100.0,
            arena_half_width: 2.0,
            ceiling: 3.0,
            fuel_main: 0.3,
            fuel_side: 0.03,
        }
    }
}

impl LanderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("main_accel", self.main_accel),
            ("spawn_height", self.spawn_height),
            ("pad_half_width", self.pad_half_width),
            ("safe_speed", self.safe_speed),
            ("safe_tilt", self.safe_tilt),
            ("arena_half_width", self.arena_half_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(name, format!("must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps", "must be positive"));
        }
        if self.ceiling <= self.spawn_height {
            return Err(Error::domain("ceiling", "must lie above the spawn height"));
        }
        Ok(())
    }

    /// Component declarations with the default weights.
    pub fn default_components() -> Vec<ComponentSpec> {
        vec![
            ComponentSpec::weighted(DIST, Sign::Positive, 100.0),
            ComponentSpec::weighted(VEL, Sign::Negative, 100.0),
            ComponentSpec::weighted(TILT, Sign::Negative, 100.0),
            ComponentSpec::weighted(CONTACT, Sign::Positive, 10.0),
            ComponentSpec::unweighted(FUEL, Sign::Negative),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub theta: f64,
    pub omega: f64,
    pub legs_contact: [bool; 2],
    pub fuel_used: f64,
    pub step_count: usize,
}

impl LanderState {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance_to_pad(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Heights of the left and right feet.
    pub fn foot_heights(&self, leg_span: f64) -> [f64; 2] {
        let lift = leg_span * self.theta.sin();
        [self.y - lift, self.y + lift]
    }

    pub fn features(&self) -> Vec<f64> {
        vec![
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.theta,
            self.omega,
            self.legs_contact[0] as u8 as f64,
            self.legs_contact[1] as u8 as f64,
            1.0,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanderAction {
    pub main_thrust: f64,
    pub side_thrust: f64,
}

impl LanderAction {
    pub const NOOP: LanderAction = LanderAction {
        main_thrust: 0.0,
        side_thrust: 0.0,
    };

    /// Clips into `main in [0, 1]`, `side in [-1, 1]`; NaN becomes 0.
    pub fn clipped(main: f64, side: f64) -> Self {
        let fix = |v: f64| if v.is_nan() { 0.0 } else { v };
        LanderAction {
            main_thrust: fix(main).clamp(0.0, 1.0),
            side_thrust: fix(side).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Landed,
    Crashed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(LanderState, LanderAction, f64)>,
    pub terminal: Option<Terminal>,
    pub final_state: LanderState,
}

impl Trajectory {
    pub fn shaped_return(&self) -> f64 {
        self.steps.iter().map(|(_, _, r)| r).sum()
    }
}

/// Landing time for a safe landing, otherwise the step cap (lower is better).
pub fn task_score(trajectory: &Trajectory, max_steps: usize) -> Result<f64> {
    match trajectory.terminal {
        Some(Terminal::Landed) => Ok(trajectory.final_state.step_count as f64),
        Some(Terminal::Crashed | Terminal::Timeout) => Ok(max_steps as f64),
        None => Err(Error::contract("task score of an unfinished trajectory")),
    }
}

#[derive(Debug, Clone)]
pub struct Lander {
    config: LanderConfig,
    components: Vec<ComponentSpec>,
    state: LanderState,
    terminal: Option<Terminal>,
}

impl Lander {
    pub fn new(config: LanderConfig) -> Self {
        Lander::with_components(config, LanderConfig::default_components())
    }

    pub fn with_components(config: LanderConfig, components: Vec<ComponentSpec>) -> Self {
        let state = initial_state(&config, 0);
        Lander {
            config,
            components,
            state,
            terminal: None,
        }
    }

    pub fn config(&self) -> &LanderConfig {
        &self.config
    }

    pub fn state(&self) -> &LanderState {
        &self.state
    }

    pub fn terminal(&self) -> Option<Terminal> {
        self.terminal
    }

    pub fn reset_state(&mut self, seed: u64) -> LanderState {
        self.state = initial_state(&self.config, seed);
        self.terminal = None;
        self.state
    }

    /// Advances one Euler step and returns the reward decomposition.
    pub fn step_state(&mut self, action: LanderAction) -> Result<(LanderState, RewardComponents, Option<Terminal>)> {
        if self.terminal.is_some() {
            return Err(Error::contract("step called on a finished episode"));
        }
        let c = &self.config;
        let action = LanderAction::clipped(action.main_thrust, action.side_thrust);
        let prev = self.state;
        let mut s = prev;

        let thrust = action.main_thrust * c.main_accel;
        let ax = -s.theta.sin() * thrust;
        let ay = s.theta.cos() * thrust - c.gravity;
        s.vx += ax * c.dt;
        s.vy += ay * c.dt;
        s.omega += action.side_thrust * c.side_angular_accel * c.dt;
        s.x += s.vx * c.dt;
        s.y += s.vy * c.dt;
        s.theta += s.omega * c.dt;
        s.step_count += 1;
        let fuel = c.fuel_main * action.main_thrust + c.fuel_side * action.side_thrust.abs();
        s.fuel_used += fuel;

        let feet = s.foot_heights(c.leg_span);
        let grounded = [feet[0] <= 0.0, feet[1] <= 0.0];
        let newly = (0..2).filter(|&i| grounded[i] && !prev.legs_contact[i]).count();
        s.legs_contact = grounded;

        let mut base = 0.0;
        let mut terminal = None;
        if grounded[0] || grounded[1] {
            let safe = s.x.abs() <= c.pad_half_width
                && s.speed() <= c.safe_speed
                && s.theta.abs() <= c.safe_tilt;
            if safe {
                base = c.landing_bonus;
                terminal = Some(Terminal::Landed);
            } else {
                base = -c.crash_penalty;
                terminal = Some(Terminal::Crashed);
            }
        } else if s.x.abs() > c.arena_half_width || s.y > c.ceiling {
            base = -c.crash_penalty;
            terminal = Some(Terminal::Crashed);
        } else if s.step_count >= c.max_steps {
            terminal = Some(Terminal::Timeout);
        }

        let mut shaping = std::collections::BTreeMap::new();
        shaping.insert(DIST.to_string(), prev.distance_to_pad() - s.distance_to_pad());
        shaping.insert(VEL.to_string(), s.speed() * c.dt);
        shaping.insert(TILT.to_string(), s.theta.abs() * c.dt);
        shaping.insert(CONTACT.to_string(), newly as f64);
        shaping.insert(FUEL.to_string(), fuel);

        if ![s.x, s.y, s.vx, s.vy, s.theta, s.omega].iter().all(|v| v.is_finite()) {
            return Err(Error::contract("lander state became non-finite"));
        }
        self.state = s;
        self.terminal = terminal;
        Ok((s, RewardComponents { base, shaping }, terminal))
    }

    /// Runs one episode under a state-feedback controller.
    pub fn rollout<F>(&mut self, seed: u64, params: &RewardParams, mut controller: F) -> Result<Trajectory>
    where
        F: FnMut(&LanderState) -> LanderAction,
    {
        self.reset_state(seed);
        let mut steps = Vec::new();
        loop {
            let before = self.state;
            let action = controller(&before);
            let (_, comps, terminal) = self.step_state(action)?;
            let r = shaped_reward(&comps, params, &self.components)?;
            steps.push((before, LanderAction::clipped(action.main_thrust, action.side_thrust), r));
            if terminal.is_some() {
                return Ok(Trajectory {
                    steps,
                    terminal,
                    final_state: self.state,
                });
            }
        }
    }
}

fn initial_state(config: &LanderConfig, seed: u64) -> LanderState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let x = jitter(config.spawn_jitter);
    let vx = jitter(config.spawn_velocity);
    let vy = jitter(config.spawn_velocity);
    LanderState {
        x,
        y: config.spawn_height,
        vx,
        vy,
        theta: 0.0,
        omega: 0.0,
        legs_contact: [false, false],
        fuel_used: 0.0,
        step_count: 0,
    }
}

impl Environment for Lander {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.reset_state(seed).features()
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let main = action.first().copied().unwrap_or(0.0);
        let side = action.get(1).copied().unwrap_or(0.0);
        let (s, components, terminal) = self.step_state(LanderAction::clipped(main, side))?;
        Ok(Transition {
            features: s.features(),
            components,
            done: terminal.is_some(),
        })
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn feature_dim(&self) -> usize {
        9
    }

    fn components(&self) -> &[ComponentSpec] {
        &self.components
    }

    fn direction(&self) -> Direction {
        Direction::Minimize
    }

    fn task_score(&self) -> Option<f64> {
        match self.terminal? {
            Terminal::Landed => Some(self.state.step_count as f64),
            Terminal::Crashed | Terminal::Timeout => Some(self.config.max_steps as f64),
        }
    }
}

/// Cascaded PD controller: tilt toward the pad, descend at a height-dependent rate.
pub fn scripted_controller(config: &LanderConfig) -> impl FnMut(&LanderState) -> LanderAction {
    let hover = config.gravity / config.main_accel;
    move |s: &LanderState| {
        let theta_target = (0.6 * s.x + 1.2 * s.vx).clamp(-0.2, 0.2);
        let side = 4.0 * (theta_target - s.theta) - 1.5 * s.omega;
        let vy_target = -(0.15 + 0.35 * s.y);
        let main = hover + 2.5 * (vy_target - s.vy);
        LanderAction::clipped(main, side)
    }
}

pub fn do_nothing_controller(_: &LanderState) -> LanderAction {
    LanderAction::NOOP
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lander() -> Lander {
        Lander::new(LanderConfig::default())
    }

    fn defaults() -> RewardParams {
        RewardParams::defaults(&LanderConfig::default_components())
    }

    #[test]
    fn reset_is_deterministic_and_clean() {
        let mut a = lander();
        let s1 = a.reset_state(42);
        let s2 = a.reset_state(42);
        assert_eq!(s1, s2);
        assert_eq!(s1.step_count, 0);
        assert_eq!(s1.fuel_used, 0.0);
        assert_ne!(a.reset_state(43), s1);
    }

    #[test]
    fn spawn_distribution_stays_in_band() {
        let c = LanderConfig::default();
        for seed in 0..1000 {
            let s = initial_state(&c, seed);
            assert_eq!(s.y, c.spawn_height);
            assert!(s.x.abs() <= c.spawn_jitter);
            assert!(s.vx.abs() <= c.spawn_velocity && s.vy.abs() <= c.spawn_velocity);
        }
    }

    #[test]
    fn free_fall_step_is_one_euler_step() {
        let mut l = lander();
        let s0 = l.reset_state(1);
        let (s1, _, _) = l.step_state(LanderAction::NOOP).unwrap();
        let c = LanderConfig::default();
        assert_eq!(s1.vy, s0.vy - c.gravity * c.dt);
        assert_eq!(s1.vx, s0.vx);
        assert_eq!(s1.y, s0.y + s1.vy * c.dt);
    }

    #[test]
    fn safe_touchdown_lands() {
        let mut l = lander();
        l.reset_state(0);
        l.state = LanderState {
            x: 0.0,
            y: 0.005,
            vx: 0.0,
            vy: -0.2,
            ..l.state
        };
        let (_, comps, terminal) = l.step_state(LanderAction::NOOP).unwrap();
        assert_eq!(terminal, Some(Terminal::Landed));
        assert_eq!(comps.base, 100.0);
        assert_eq!(comps.shaping[CONTACT], 2.0);
        assert_eq!(l.task_score(), Some(1.0));
        assert!(l.step_state(LanderAction::NOOP).is_err());
    }

    #[test]
    fn hard_touchdown_crashes() {
        let mut l = lander();
        l.reset_state(0);
        l.state.y = 0.01;
        l.state.vy = -2.0;
        let (_, comps, terminal) = l.step_state(LanderAction::NOOP).unwrap();
        assert_eq!(terminal, Some(Terminal::Crashed));
        assert_eq!(comps.base, -100.0);
        assert_eq!(l.task_score(), Some(1000.0));
    }

    #[test]
    fn airborne_at_cap_times_out() {
        let mut l = Lander::new(LanderConfig {
            max_steps: 5,
            ..LanderConfig::default()
        });
        let hover = LanderConfig::default().gravity / LanderConfig::default().main_accel;
        let traj = l
            .rollout(3, &defaults(), |_| LanderAction::clipped(hover, 0.0))
            .unwrap();
        assert_eq!(traj.terminal, Some(Terminal::Timeout));
        assert_eq!(traj.steps.len(), 5);
        assert_eq!(task_score(&traj, 5).unwrap(), 5.0);
    }

    #[test]
    fn task_score_rules() {
        let mut l = lander();
        let mut traj = l.rollout(0, &defaults(), do_nothing_controller).unwrap();
        assert_eq!(traj.terminal, Some(Terminal::Crashed));
        assert_eq!(task_score(&traj, 1000).unwrap(), 1000.0);
        traj.terminal = Some(Terminal::Landed);
        traj.final_state.step_count = 250;
        assert_eq!(task_score(&traj, 1000).unwrap(), 250.0);
        traj.terminal = None;
        assert!(task_score(&traj, 1000).is_err());
    }

    #[test]
    fn scripted_controller_lands() {
        let c = LanderConfig::default();
        let mut l = lander();
        let mut landed = 0;
        for seed in 0..50 {
            let traj = l.rollout(seed, &defaults(), scripted_controller(&c)).unwrap();
            if traj.terminal == Some(Terminal::Landed) {
                landed += 1;
                assert!(task_score(&traj, c.max_steps).unwrap() < c.max_steps as f64);
            }
        }
        assert_eq!(landed, 50);
    }

    #[test]
    fn scripted_beats_do_nothing_on_default_return() {
        let c = LanderConfig::default();
        let mut l = lander();
        let scripted = l.rollout(5, &defaults(), scripted_controller(&c)).unwrap().shaped_return();
        let idle = l.rollout(5, &defaults(), do_nothing_controller).unwrap().shaped_return();
        assert!(scripted > idle, "{scripted} vs {idle}");
    }

    #[test]
    fn free_fall_energy_non_increasing() {
        let c = LanderConfig::default();
        let mut l = lander();
        l.reset_state(9);
        let energy = |s: &LanderState| 0.5 * (s.vx * s.vx + s.vy * s.vy) + c.gravity * s.y;
        let mut e = energy(l.state());
        loop {
            let (s, _, terminal) = l.step_state(LanderAction::NOOP).unwrap();
            let e2 = energy(&s);
            assert!(e2 <= e + 1e-12, "{e2} > {e}");
            e = e2;
            if terminal.is_some() {
                break;
            }
        }
    }

    #[test]
    fn same_actions_same_trajectory() {
        let c = LanderConfig::default();
        let a = lander().rollout(11, &defaults(), scripted_controller(&c)).unwrap();
        let b = lander().rollout(11, &defaults(), scripted_controller(&c)).unwrap();
        assert_eq!(a, b);
    }
}
