//! Training loop with the velocity schedule, and deterministic evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{decode_action, observe, RewardParams, SnakeEnv, SpeedSignal};
use super::net::{Adam, PolicyNet};
use super::normalize::RunningMeanStd;
use super::policy::Policy;
use super::ppo::{ppo_update, sample_action, LossCoefficients, RolloutBatch, UpdateConfig, UpdateStats};
use crate::dynamics::{InitialPose, RobotConfig, RobotModel, StepInfo};
use crate::error::{Error, Result};
use crate::metrics::{summarize_run, EvalResult, PowerTrace};
use crate::search::{EVAL_STEPS, WARMUP_STEPS};

/// Target velocities cycled through after the warm-up episodes, m/s.
pub const VELOCITY_CYCLE: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub steps_per_update: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Initial log standard deviation of every action component.
    pub log_std_init: f64,
    pub hidden: Vec<usize>,
    /// Control steps per episode.
    pub episode_length: usize,
    /// Episodes trained at `initial_velocity` before cycling.
    pub initial_episodes: usize,
    pub initial_velocity: f64,
    /// Train every episode at this velocity instead of the schedule.
    pub fixed_velocity: Option<f64>,
    pub checkpoint_every: usize,
    pub reward: RewardParams,
    pub speed_signal: SpeedSignal,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 3_000_000,
            steps_per_update: 2048,
            epochs_per_update: 10,
            minibatch_size: 256,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            value_coef: 0.5,
            entropy_coef: 0.0,
            log_std_init: -2.0,
            hidden: vec![200, 200],
            episode_length: 1000,
            initial_episodes: 100,
            initial_velocity: 0.1,
            fixed_velocity: None,
            checkpoint_every: 50,
            reward: RewardParams::default(),
            speed_signal: SpeedSignal::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_steps", self.total_steps),
            ("steps_per_update", self.steps_per_update),
            ("epochs_per_update", self.epochs_per_update),
            ("minibatch_size", self.minibatch_size),
            ("episode_length", self.episode_length),
            ("checkpoint_every", self.checkpoint_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if self.steps_per_update % self.minibatch_size != 0 {
            return Err(Error::validation(
                "minibatch_size",
                format!("{} does not divide steps_per_update {}", self.minibatch_size, self.steps_per_update),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::validation("hidden", "needs at least one non-empty layer"));
        }
        let unit = [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(self.clip_epsilon > 0.0 && self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::validation("clip_epsilon", "clip, learning rate and gradient bound must be positive"));
        }
        self.reward.validate()
    }

    /// Target velocity of episode `episode` (0-based).
    pub fn target_velocity(&self, episode: usize) -> f64 {
        if let Some(v) = self.fixed_velocity {
            return v;
        }
        if episode < self.initial_episodes {
            self.initial_velocity
        } else {
            VELOCITY_CYCLE[(episode - self.initial_episodes) % VELOCITY_CYCLE.len()]
        }
    }

    pub fn num_updates(&self) -> usize {
        self.total_steps.div_ceil(self.steps_per_update)
    }

    fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            epochs: self.epochs_per_update,
            minibatch_size: self.minibatch_size,
            loss: LossCoefficients {
                clip_epsilon: self.clip_epsilon,
                value_coef: self.value_coef,
                entropy_coef: self.entropy_coef,
            },
            max_grad_norm: self.max_grad_norm,
        }
    }
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Update the episode finished during (1-based).
    pub update: usize,
    /// 1-based.
    pub episode: usize,
    pub target_velocity: f64,
    pub episode_return: f64,
    /// Net centre-of-mass displacement over elapsed time, m/s.
    pub mean_velocity: f64,
    pub mean_power: f64,
}

impl EpisodeRecord {
    pub const CSV_HEADER: &'static str = "update,episode,v_t,return,mean_velocity,mean_power";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.update, self.episode, self.target_velocity, self.episode_return, self.mean_velocity, self.mean_power
        )
    }
}

/// Snapshot handed to the progress callback after every update.
pub struct TrainProgress<'a> {
    /// 1-based.
    pub update: usize,
    pub num_updates: usize,
    pub steps_done: usize,
    pub stats: UpdateStats,
    pub policy: &'a Policy,
    /// Every episode finished so far.
    pub episodes: &'a [EpisodeRecord],
    /// `update` is a multiple of `checkpoint_every`.
    pub checkpoint_due: bool,
}

pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<EpisodeRecord>,
}

struct EpisodeTracker {
    ret: f64,
    power: f64,
    steps: usize,
    start: nalgebra::Vector2<f64>,
}

/// Trains a policy from scratch. Deterministic for a given seed.
///
/// `progress` runs after every update; an error from it stops training.
pub fn train<F>(config: &RobotConfig, cfg: &TrainConfig, seed: u64, mut progress: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainProgress) -> Result<()>,
{
    cfg.validate()?;
    let model = RobotModel::build(config.clone())?;
    let mut env = SnakeEnv::new(model, cfg.reward, cfg.speed_signal, cfg.episode_length)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
    sample_rng.set_stream(1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(2);

    let net = PolicyNet::new(env.observation_dim(), &cfg.hidden, env.action_dim(), cfg.log_std_init, &mut init_rng);
    let mut optimizer = Adam::new(&net, cfg.learning_rate);
    let mut policy = Policy { net, obs_norm: RunningMeanStd::new(env.observation_dim()) };
    let update_cfg = cfg.update_config();
    let dt = config.control_dt;

    let mut log = Vec::new();
    let mut episode = 0;
    let mut raw_obs = env.reset(cfg.target_velocity(episode))?;
    let mut tracker = EpisodeTracker { ret: 0.0, power: 0.0, steps: 0, start: env.state().com_position };
    let num_updates = cfg.num_updates();
    let mut steps_done = 0;

    for update in 1..=num_updates {
        let mut batch = RolloutBatch::default();
        for _ in 0..cfg.steps_per_update {
            policy.obs_norm.update(&raw_obs);
            let obs = policy.obs_norm.normalize(&raw_obs);
            let (mean, value) = policy.net.forward(&obs)?;
            let sample = sample_action(&mean, policy.net.log_std.as_slice(), &mut sample_rng);
            let tr = env.step(&sample.action)?;
            steps_done += 1;
            tracker.ret += tr.reward;
            tracker.power += tr.power;
            tracker.steps += 1;
            let mut reward = tr.reward;
            let ended = tr.truncated || tr.diverged;
            if tr.truncated && !tr.diverged {
                // time limit, not a terminal state: bootstrap from the next state
                let next = policy.obs_norm.normalize(&tr.observation);
                reward += cfg.gamma * policy.net.forward(&next)?.1;
            }
            batch.push(obs, &sample, reward, value, ended);
            if ended {
                if tr.diverged {
                    log::warn!("simulation diverged in episode {}", episode + 1);
                }
                let elapsed = tracker.steps as f64 * dt;
                log.push(EpisodeRecord {
                    update,
                    episode: episode + 1,
                    target_velocity: env.target(),
                    episode_return: tracker.ret,
                    mean_velocity: (env.state().com_position - tracker.start).norm() / elapsed,
                    mean_power: tracker.power / tracker.steps as f64,
                });
                episode += 1;
                raw_obs = env.reset(cfg.target_velocity(episode))?;
                tracker = EpisodeTracker { ret: 0.0, power: 0.0, steps: 0, start: env.state().com_position };
            } else {
                raw_obs = tr.observation;
            }
        }
        let bootstrap = policy.net.forward(&policy.obs_norm.normalize(&raw_obs))?.1;
        batch.finish(bootstrap, cfg.gamma, cfg.gae_lambda);
        let stats = ppo_update(&mut policy.net, &mut optimizer, &batch, &update_cfg, &mut shuffle_rng)?;
        log::debug!(
            "update {update}/{num_updates}: surrogate {:.4} value {:.4} kl {:.4} clip {:.3}",
            stats.last_epoch.surrogate,
            stats.last_epoch.value_error,
            stats.last_epoch.approx_kl,
            stats.last_epoch.clip_fraction
        );
        progress(&TrainProgress {
            update,
            num_updates,
            steps_done,
            stats,
            policy: &policy,
            episodes: &log,
            checkpoint_due: update % cfg.checkpoint_every == 0,
        })?;
    }
    Ok(TrainOutcome { policy, log })
}

/// Target velocities of the evaluation sweep: 0.030 to 0.250 m/s in steps of
/// 0.005 (the lower endpoint 0.025 is left out, giving 45 targets).
pub fn evaluation_targets() -> Vec<f64> {
    (1..=45).map(|k| (25 + 5 * k) as f64 / 1000.0).collect()
}

/// Runs the clipped policy mean at one target velocity under the standard
/// 1000-step, 200-warmup protocol.
pub fn evaluate_target(policy: &Policy, model: &RobotModel, target: f64) -> Result<EvalResult> {
    let cfg = model.config();
    let nj = model.num_joints();
    let mut state = model.reset(&InitialPose::Straight)?;
    let rest = StepInfo {
        torques: vec![0.0; nj],
        joint_velocities: vec![0.0; nj],
        head_velocity: 0.0,
        instantaneous_power: 0.0,
    };
    let mut obs = observe(&state, &rest, target);
    let mut trace = PowerTrace::new();
    let mut start = state.com_position;
    for i in 0..EVAL_STEPS {
        if i == WARMUP_STEPS {
            start = state.com_position;
        }
        let action = policy.act_deterministic(&obs)?;
        let targets: Vec<f64> = decode_action(&action)
            .into_iter()
            .map(|a| a.clamp(-cfg.joint_limit, cfg.joint_limit))
            .collect();
        let (next, info) = model.step(&state, &targets)?;
        obs = observe(&next, &info, target);
        trace.push(&info, cfg.gear);
        state = next;
    }
    let distance = (state.com_position - start).norm();
    let duration = (EVAL_STEPS - WARMUP_STEPS) as f64 * cfg.control_dt;
    summarize_run(&trace, cfg, distance, duration, WARMUP_STEPS)
}

/// One [`EvalResult`] per target, in order.
pub fn evaluate_policy(policy: &Policy, config: &RobotConfig, targets: &[f64]) -> Result<Vec<EvalResult>> {
    let model = RobotModel::build(config.clone())?;
    targets.iter().map(|&t| evaluate_target(policy, &model, t)).collect()
}
