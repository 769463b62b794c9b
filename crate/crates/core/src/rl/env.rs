//! Environment adapter: observations, action decoding and the reward.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{InitialPose, RobotModel, SimState, StepInfo};
use crate::error::{Error, Result};
use crate::metrics::normalized_power;

/// Bound of every action component.
pub const ACTION_LIMIT: f64 = 1.5;

/// Observation length for a chain with `num_joints` joints: angles,
/// velocities, head speed, torques and the target velocity.
pub fn observation_dim(num_joints: usize) -> usize {
    3 * num_joints + 2
}

/// `[joint angles, joint velocities, head speed, torques, target velocity]`.
pub fn observe(state: &SimState, info: &StepInfo, target_velocity: f64) -> Vec<f64> {
    let mut obs = Vec::with_capacity(observation_dim(state.joint_angles.len()));
    obs.extend_from_slice(&state.joint_angles);
    obs.extend_from_slice(&state.joint_velocities);
    obs.push(info.head_velocity);
    obs.extend_from_slice(&info.torques);
    obs.push(target_velocity);
    obs
}

pub fn clip_action(a: f64) -> f64 {
    a.clamp(-ACTION_LIMIT, ACTION_LIMIT)
}

/// Maps actions linearly onto joint targets, ±1.5 ↦ ±90°.
pub fn decode_action(action: &[f64]) -> Vec<f64> {
    action.iter().map(|&a| clip_action(a) / ACTION_LIMIT * FRAC_PI_2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Velocity error at which the velocity reward reaches zero, m/s.
    pub spread: f64,
    /// Sharpness of the velocity peak; the base is raised to `1 / shaping`.
    pub shaping: f64,
    /// Power-curve slope; the power factor is raised to `slope^-2`.
    pub slope: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { spread: 0.2, shaping: 0.2, slope: 0.6 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("spread", self.spread), ("shaping", self.shaping), ("slope", self.slope)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Peaks at 1 when `velocity == target` and is zero once the error reaches
/// `spread`.
pub fn velocity_reward(target: f64, velocity: f64, p: &RewardParams) -> f64 {
    let base = (1.0 - (target - velocity).abs() / p.spread).max(0.0);
    base.powf(1.0 / p.shaping)
}

fn power_factor(p_hat: f64, p: &RewardParams) -> f64 {
    (1.0 - p_hat.clamp(0.0, 1.0)).powf(p.slope.powi(-2))
}

pub fn power_reward(p_hat: f64, r_max: f64, p: &RewardParams) -> f64 {
    r_max * power_factor(p_hat, p)
}

/// Power reward whose ceiling is the velocity reward.
pub fn combined_reward(target: f64, velocity: f64, p_hat: f64, p: &RewardParams) -> f64 {
    power_reward(p_hat, velocity_reward(target, velocity, p), p)
}

/// Which speed the velocity reward compares against the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedSignal {
    /// Centre-of-mass displacement over the last `window` control steps
    /// divided by their duration.
    CentreOfMass { window: usize },
    /// Head link speed at the end of the control step.
    Head,
}

impl Default for SpeedSignal {
    fn default() -> Self {
        SpeedSignal::CentreOfMass { window: 20 }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Speed fed to the reward, m/s.
    pub speed: f64,
    /// Shaft power of all joints during the step, W.
    pub power: f64,
    /// The episode hit its step limit.
    pub truncated: bool,
    /// The simulation diverged; the state was not advanced.
    pub diverged: bool,
}

/// One robot driven by joint-angle actions for a fixed number of control
/// steps per episode.
#[derive(Debug, Clone)]
pub struct SnakeEnv {
    model: RobotModel,
    reward: RewardParams,
    signal: SpeedSignal,
    episode_length: usize,
    state: SimState,
    last_info: StepInfo,
    target: f64,
    steps: usize,
    /// Recent centre-of-mass positions, oldest first.
    com_history: VecDeque<Vector2<f64>>,
}

impl SnakeEnv {
    pub fn new(model: RobotModel, reward: RewardParams, signal: SpeedSignal, episode_length: usize) -> Result<Self> {
        reward.validate()?;
        if episode_length == 0 {
            return Err(Error::validation("episode_length", "must be positive"));
        }
        let state = model.reset(&InitialPose::Straight)?;
        let last_info = rest_info(model.num_joints());
        if signal == (SpeedSignal::CentreOfMass { window: 0 }) {
            return Err(Error::validation("speed_signal", "window must be positive"));
        }
        let com_history = VecDeque::from([state.com_position]);
        Ok(Self { model, reward, signal, episode_length, state, last_info, target: 0.0, steps: 0, com_history })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.model.num_joints())
    }

    pub fn action_dim(&self) -> usize {
        self.model.num_joints()
    }

    /// Straight chain at rest, new target velocity.
    pub fn reset(&mut self, target: f64) -> Result<Vec<f64>> {
        self.state = self.model.reset(&InitialPose::Straight)?;
        self.last_info = rest_info(self.model.num_joints());
        self.target = target;
        self.steps = 0;
        self.com_history = VecDeque::from([self.state.com_position]);
        Ok(self.observation())
    }

    pub fn observation(&self) -> Vec<f64> {
        observe(&self.state, &self.last_info, self.target)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if action.len() != self.action_dim() {
            return Err(Error::validation(
                "action",
                format!("expected {} components, got {}", self.action_dim(), action.len()),
            ));
        }
        let cfg = self.model.config();
        let targets: Vec<f64> = decode_action(action)
            .into_iter()
            .map(|a| a.clamp(-cfg.joint_limit, cfg.joint_limit))
            .collect();
        self.steps += 1;
        let truncated = self.steps >= self.episode_length;
        let (next, info) = match self.model.step(&self.state, &targets) {
            Ok(out) => out,
            Err(Error::SimulationDiverged { .. }) => {
                return Ok(Transition {
                    observation: self.observation(),
                    reward: 0.0,
                    speed: 0.0,
                    power: 0.0,
                    truncated,
                    diverged: true,
                })
            }
            Err(e) => return Err(e),
        };
        let speed = match self.signal {
            SpeedSignal::CentreOfMass { window } => {
                self.com_history.push_back(next.com_position);
                if self.com_history.len() > window + 1 {
                    self.com_history.pop_front();
                }
                let span = (self.com_history.len() - 1) as f64 * cfg.control_dt;
                (next.com_position - self.com_history[0]).norm() / span
            }
            SpeedSignal::Head => info.head_velocity,
        };
        let forces: Vec<f64> = info.torques.iter().map(|t| t / cfg.gear).collect();
        let p_hat = normalized_power(&forces, &info.joint_velocities, cfg);
        let reward = combined_reward(self.target, speed, p_hat, &self.reward);
        let power = info.instantaneous_power;
        self.state = next;
        self.last_info = info;
        Ok(Transition { observation: self.observation(), reward, speed, power, truncated, diverged: false })
    }
}

fn rest_info(num_joints: usize) -> StepInfo {
    StepInfo {
        torques: vec![0.0; num_joints],
        joint_velocities: vec![0.0; num_joints],
        head_velocity: 0.0,
        instantaneous_power: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::RobotConfig;
    use proptest::prelude::*;

    fn env() -> SnakeEnv {
        let model = RobotModel::build(RobotConfig::default()).unwrap();
        SnakeEnv::new(model, RewardParams::default(), SpeedSignal::default(), 1000).unwrap()
    }

    #[test]
    fn resting_observation() {
        let mut e = env();
        let obs = e.reset(0.1).unwrap();
        assert_eq!(obs.len(), 26);
        assert!(obs[..25].iter().all(|&v| v == 0.0));
        assert_eq!(obs[25], 0.1);
    }

    #[test]
    fn torques_pass_through() {
        let mut e = env();
        e.reset(0.1).unwrap();
        let t = e.step(&[0.4, -0.2, 0.0, 1.5, -1.5, 0.1, 0.9, -0.7]).unwrap();
        let info = &e.last_info;
        assert_eq!(&t.observation[17..25], info.torques.as_slice());
        assert_eq!(t.observation[16], info.head_velocity);
        assert_eq!(&t.observation[..8], e.state().joint_angles.as_slice());
    }

    #[test]
    fn decode_examples() {
        let d = decode_action(&[0.0, 1.5, -0.75, 4.0]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], FRAC_PI_2);
        assert!((d[2] + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(d[3], FRAC_PI_2);
    }

    #[test]
    fn reward_examples() {
        let p = RewardParams::default();
        assert_eq!(velocity_reward(0.1, 0.1, &p), 1.0);
        assert_eq!(velocity_reward(0.2, 0.0, &p), 0.0);
        assert_eq!(velocity_reward(0.0, 0.2, &p), 0.0);
        assert_eq!(velocity_reward(0.1, 0.45, &p), 0.0);
        assert!((velocity_reward(0.2, 0.1, &p) - 0.031_25).abs() < 1e-12);
        assert_eq!(power_reward(0.0, 0.7, &p), 0.7);
        assert_eq!(power_reward(1.0, 1.0, &p), 0.0);
        assert!((power_reward(0.5, 1.0, &p) - 0.1459).abs() < 1e-4);
        assert_eq!(combined_reward(0.1, 0.1, 0.0, &p), 1.0);
        assert_eq!(combined_reward(0.1, 0.35, 0.0, &p), 0.0);
        assert!((combined_reward(0.15, 0.05, 0.5, &p) - 0.00456).abs() < 1e-5);
    }

    #[test]
    fn step_counts_and_truncates() {
        let model = RobotModel::build(RobotConfig::default()).unwrap();
        let mut e = SnakeEnv::new(model, RewardParams::default(), SpeedSignal::Head, 3).unwrap();
        e.reset(0.2).unwrap();
        let a = [0.3; 8];
        assert!(!e.step(&a).unwrap().truncated);
        assert!(!e.step(&a).unwrap().truncated);
        let last = e.step(&a).unwrap();
        assert!(last.truncated && !last.diverged);
        assert!(last.reward >= 0.0 && last.reward <= 1.0);
        assert!(e.step(&[0.0; 7]).is_err());
    }

    proptest! {
        #[test]
        fn reward_bounded(target in -1.0f64..1.0, v in -1.0f64..1.0, p_hat in -0.5f64..1.5) {
            let r = combined_reward(target, v, p_hat, &RewardParams::default());
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
