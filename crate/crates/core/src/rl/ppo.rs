//! Gaussian action sampling, advantage estimation and the clipped-surrogate
//! update.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::env::clip_action;
use super::net::{Adam, PolicyNet};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), s)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

/// One draw from the policy distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    /// The Gaussian sample before clipping; PPO ratios are taken on this.
    pub raw: Vec<f64>,
    /// `raw` clipped to the action bounds; this is what the robot receives.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

pub fn sample_action<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> SampledAction {
    let raw: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_prob = gaussian_log_prob(&raw, mean, log_std);
    let action = raw.iter().copied().map(clip_action).collect();
    SampledAction { raw, action, log_prob }
}

/// Generalized advantage estimates and value targets.
///
/// `episode_ends[t]` cuts the recursion after step `t`; `bootstrap_value` is
/// the value of the state following the last step when that step does not
/// end an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    episode_ends: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n, "values must align with rewards");
    assert_eq!(episode_ends.len(), n, "episode ends must align with rewards");
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if episode_ends[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (bootstrap_value, 0.0)
        } else {
            (values[t + 1], running)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Experience collected between two updates, aligned per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    /// Normalized observations the policy saw.
    pub observations: Vec<Vec<f64>>,
    /// Pre-clip actions.
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The step closed an episode (time limit or divergence).
    pub episode_ends: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, observation: Vec<f64>, sample: &SampledAction, reward: f64, value: f64, episode_end: bool) {
        self.observations.push(observation);
        self.actions.push(sample.raw.clone());
        self.log_probs.push(sample.log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.episode_ends.push(episode_end);
    }

    /// Fills `advantages` and `returns` from the stored rewards and values.
    pub fn finish(&mut self, bootstrap_value: f64, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.episode_ends, bootstrap_value, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let aligned = [
            self.observations.len(),
            self.actions.len(),
            self.log_probs.len(),
            self.values.len(),
            self.episode_ends.len(),
            self.advantages.len(),
            self.returns.len(),
        ]
        .iter()
        .all(|&l| l == n);
        if !aligned || n == 0 {
            return Err(Error::validation("batch", "arrays must be non-empty and equally long; call finish()"));
        }
        Ok(())
    }
}

/// Advantages shifted and scaled to zero mean and unit variance.
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt() + 1e-8;
    advantages.iter().map(|a| (a - mean) / scale).collect()
}

/// Minibatch in column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    /// `obs_dim × B`.
    pub observations: DMatrix<f64>,
    /// `act_dim × B`, pre-clip.
    pub actions: DMatrix<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn gather(batch: &RolloutBatch, advantages: &[f64], indices: &[usize]) -> Self {
        let obs_dim = batch.observations[0].len();
        let act_dim = batch.actions[0].len();
        Self {
            observations: DMatrix::from_fn(obs_dim, indices.len(), |r, c| batch.observations[indices[c]][r]),
            actions: DMatrix::from_fn(act_dim, indices.len(), |r, c| batch.actions[indices[c]][r]),
            old_log_probs: indices.iter().map(|&i| batch.log_probs[i]).collect(),
            advantages: indices.iter().map(|&i| advantages[i]).collect(),
            returns: indices.iter().map(|&i| batch.returns[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

/// Coefficients of the minimized loss
/// `-surrogate + value_coef · value_error - entropy_coef · entropy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    /// Mean clipped surrogate (to be maximized).
    pub surrogate: f64,
    /// Mean squared value error.
    pub value_error: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss value and its gradient with respect to every parameter of `net`.
pub fn ppo_loss(net: &PolicyNet, mb: &Minibatch, coef: &LossCoefficients) -> (LossStats, PolicyNet) {
    let b = mb.len();
    let bf = b as f64;
    let act_dim = net.act_dim();
    let sigma: Vec<f64> = net.log_std.iter().map(|s| s.exp()).collect();

    let (mean, policy_acts) = net.policy.forward(&mb.observations);
    let (value, value_acts) = net.value.forward(&mb.observations);

    let mut stats = LossStats::default();
    let mut d_mean = DMatrix::zeros(act_dim, b);
    let mut d_log_std = vec![0.0; act_dim];
    let mut d_value = DMatrix::zeros(1, b);
    let (lo, hi) = (1.0 - coef.clip_epsilon, 1.0 + coef.clip_epsilon);

    for c in 0..b {
        let mut log_prob = 0.0;
        for i in 0..act_dim {
            let z = (mb.actions[(i, c)] - mean[(i, c)]) / sigma[i];
            log_prob += -0.5 * z * z - net.log_std[i] - 0.5 * LN_2PI;
        }
        let log_ratio = log_prob - mb.old_log_probs[c];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[c];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(lo, hi) * adv;
        stats.surrogate += unclipped.min(clipped) / bf;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / bf;
        if ratio < lo || ratio > hi {
            stats.clip_fraction += 1.0 / bf;
        }
        // d(-surrogate)/d(log_prob); zero when the clipped branch is the minimum
        let g = if unclipped <= clipped { -adv * ratio / bf } else { 0.0 };
        if g != 0.0 {
            for i in 0..act_dim {
                let diff = mb.actions[(i, c)] - mean[(i, c)];
                let var = sigma[i] * sigma[i];
                d_mean[(i, c)] = g * diff / var;
                d_log_std[i] += g * (diff * diff / var - 1.0);
            }
        }
        let err = value[(0, c)] - mb.returns[c];
        stats.value_error += err * err / bf;
        d_value[(0, c)] = coef.value_coef * 2.0 * err / bf;
    }
    stats.entropy = net.log_std.iter().map(|s| s + 0.5 * (1.0 + LN_2PI)).sum();
    stats.total = -stats.surrogate + coef.value_coef * stats.value_error - coef.entropy_coef * stats.entropy;

    let mut grad = net.zeros_like();
    net.policy.backward(&policy_acts, &d_mean, &mut grad.policy);
    net.value.backward(&value_acts, &d_value, &mut grad.value);
    for (g, d) in grad.log_std.iter_mut().zip(&d_log_std) {
        *g = d - coef.entropy_coef;
    }
    (stats, grad)
}

/// Optimization settings of one PPO update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub loss: LossCoefficients,
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    /// Averages over the minibatches of the last epoch.
    pub last_epoch: LossStats,
    pub minibatches: usize,
    /// A non-finite loss or gradient appeared; the network was left unchanged.
    pub aborted: bool,
}

/// Runs the clipped-surrogate optimization over `batch` in place.
///
/// On a non-finite loss the whole update is rolled back and reported as
/// aborted.
pub fn ppo_update<R: Rng>(
    net: &mut PolicyNet,
    optimizer: &mut Adam,
    batch: &RolloutBatch,
    cfg: &UpdateConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    batch.check()?;
    if cfg.minibatch_size == 0 || batch.len() % cfg.minibatch_size != 0 {
        return Err(Error::validation(
            "minibatch_size",
            format!("{} does not divide the batch of {}", cfg.minibatch_size, batch.len()),
        ));
    }
    let advantages = normalize_advantages(&batch.advantages);
    let saved_net = net.clone();
    let saved_opt = optimizer.clone();
    let mut indices: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();

    for epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        let mut epoch_stats = LossStats::default();
        let chunks = batch.len() / cfg.minibatch_size;
        for chunk in indices.chunks(cfg.minibatch_size) {
            let mb = Minibatch::gather(batch, &advantages, chunk);
            let (loss, mut grad) = ppo_loss(net, &mb, &cfg.loss);
            let norm = grad.norm();
            if !loss.total.is_finite() || !norm.is_finite() {
                log::warn!("non-finite PPO loss; discarding the batch");
                *net = saved_net;
                *optimizer = saved_opt;
                return Ok(UpdateStats { aborted: true, ..stats });
            }
            grad.clip_part_norms(cfg.max_grad_norm);
            optimizer.step(net, &grad);
            stats.minibatches += 1;
            let w = 1.0 / chunks as f64;
            epoch_stats.total += w * loss.total;
            epoch_stats.surrogate += w * loss.surrogate;
            epoch_stats.value_error += w * loss.value_error;
            epoch_stats.entropy += w * loss.entropy;
            epoch_stats.approx_kl += w * loss.approx_kl;
            epoch_stats.clip_fraction += w * loss.clip_fraction;
        }
        if epoch + 1 == cfg.epochs {
            stats.last_epoch = epoch_stats;
        }
    }
    if !net.is_finite() {
        log::warn!("non-finite parameters after PPO update; discarding the batch");
        *net = saved_net;
        *optimizer = saved_opt;
        return Ok(UpdateStats { aborted: true, ..stats });
    }
    Ok(stats)
}
