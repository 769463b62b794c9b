use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgl_core::dynamics::RobotConfig;
use sgl_core::rl::*;

const GRAD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

fn small_net(seed: u64) -> PolicyNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNet::new(5, &[4, 4], 3, -0.3, &mut rng);
    // non-trivial output layer and biases so every path carries gradient
    for t in net.tensors_mut() {
        for v in t.iter_mut() {
            *v += 0.3 * rng.gen_range(-1.0..1.0);
        }
    }
    net
}

fn random_minibatch(net: &PolicyNet, size: usize, log_ratio_spread: f64, seed: u64) -> Minibatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = DMatrix::from_fn(net.obs_dim(), size, |_, _| rng.gen_range(-2.0..2.0));
    let actions = DMatrix::from_fn(net.act_dim(), size, |_, _| rng.gen_range(-1.5..1.5));
    let (mean, _) = net.policy.forward(&obs);
    let old_log_probs = (0..size)
        .map(|c| {
            let a: Vec<f64> = actions.column(c).iter().copied().collect();
            let m: Vec<f64> = mean.column(c).iter().copied().collect();
            gaussian_log_prob(&a, &m, net.log_std.as_slice()) + log_ratio_spread * rng.gen_range(-1.0..1.0)
        })
        .collect();
    Minibatch {
        observations: obs,
        actions,
        old_log_probs,
        advantages: (0..size).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..size).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter.
fn worst_gradient_error(net: &PolicyNet, mb: &Minibatch, coef: &LossCoefficients) -> f64 {
    let (_, grad) = ppo_loss(net, mb, coef);
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let original = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = original + FD_STEP;
            let up = ppo_loss(&probe, mb, coef).0.total;
            probe.tensors_mut()[ti][i] = original - FD_STEP;
            let down = ppo_loss(&probe, mb, coef).0.total;
            probe.tensors_mut()[ti][i] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[flat];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
            flat += 1;
        }
    }
    worst
}

#[test]
fn value_loss_gradient_matches_finite_differences() {
    let net = small_net(1);
    let mut mb = random_minibatch(&net, 16, 0.0, 2);
    mb.advantages.iter_mut().for_each(|a| *a = 0.0);
    let coef = LossCoefficients { clip_epsilon: 0.2, value_coef: 1.0, entropy_coef: 0.0 };
    let err = worst_gradient_error(&net, &mb, &coef);
    assert!(err < GRAD_TOL, "relative error {err}");
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    // an enormous clip range leaves the plain likelihood-ratio objective
    let net = small_net(3);
    let mb = random_minibatch(&net, 16, 0.3, 4);
    let coef = LossCoefficients { clip_epsilon: 1e9, value_coef: 0.0, entropy_coef: 0.0 };
    let err = worst_gradient_error(&net, &mb, &coef);
    assert!(err < GRAD_TOL, "relative error {err}");
}

#[test]
fn clipped_surrogate_gradient_matches_finite_differences() {
    for seed in 0..4 {
        let net = small_net(10 + seed);
        let mb = random_minibatch(&net, 24, 0.4, 20 + seed);
        let coef = LossCoefficients { clip_epsilon: 0.2, value_coef: 0.5, entropy_coef: 0.01 };
        let (stats, _) = ppo_loss(&net, &mb, &coef);
        assert!(stats.clip_fraction > 0.0, "batch should exercise the clip");
        let err = worst_gradient_error(&net, &mb, &coef);
        assert!(err < GRAD_TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn clip_region_has_zero_policy_gradient() {
    let net = small_net(5);
    let coef = LossCoefficients { clip_epsilon: 0.2, value_coef: 0.5, entropy_coef: 0.0 };
    for (advantage, log_ratio) in [(1.0, 0.5), (-1.0, -0.5)] {
        let mut mb = random_minibatch(&net, 1, 0.0, 6);
        // ratio = e^±0.5 lies outside [0.8, 1.2] on the side the clip binds
        mb.old_log_probs[0] -= log_ratio;
        mb.advantages[0] = advantage;
        let (stats, grad) = ppo_loss(&net, &mb, &coef);
        assert_eq!(stats.clip_fraction, 1.0);
        assert!(grad.policy.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(grad.policy.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(grad.log_std.iter().all(|&v| v == 0.0));
        assert!(grad.value.weights.iter().any(|w| w.iter().any(|&v| v != 0.0)));
    }
}

#[test]
fn unchanged_policy_has_zero_surrogate_after_normalization() {
    let net = small_net(7);
    let mut mb = random_minibatch(&net, 32, 0.0, 8);
    mb.advantages = normalize_advantages(&mb.advantages);
    let coef = LossCoefficients { clip_epsilon: 0.2, value_coef: 0.5, entropy_coef: 0.0 };
    let (stats, _) = ppo_loss(&net, &mb, &coef);
    assert!(stats.surrogate.abs() < 1e-12, "{}", stats.surrogate);
    assert!(stats.approx_kl.abs() < 1e-12);
    assert_eq!(stats.clip_fraction, 0.0);
}

/// GAE as the λ-weighted average of n-step advantage estimates, summed path
/// by path without any recursion.
fn brute_force_gae(rewards: &[f64], values: &[f64], tail: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let t_len = rewards.len();
    let value_at = |k: usize| if k < t_len { values[k] } else { tail };
    (0..t_len)
        .map(|t| {
            let horizon = t_len - t;
            let n_step = |n: usize| {
                let mut g = 0.0;
                for k in 0..n {
                    g += gamma.powi(k as i32) * rewards[t + k];
                }
                g + gamma.powi(n as i32) * value_at(t + n) - values[t]
            };
            let mut total = 0.0;
            for n in 1..horizon {
                total += (1.0 - lambda) * lambda.powi(n as i32 - 1) * n_step(n);
            }
            total + lambda.powi(horizon as i32 - 1) * n_step(horizon)
        })
        .collect()
}

#[test]
fn gae_matches_brute_force_on_short_episodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let len = rng.gen_range(1..=5);
        let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma = rng.gen_range(0.5..1.0);
        let lambda = rng.gen_range(0.0..1.0);
        let terminal = rng.gen::<bool>();
        let bootstrap = rng.gen_range(-1.0..1.0);
        let mut ends = vec![false; len];
        ends[len - 1] = terminal;
        let (adv, ret) = compute_gae(&rewards, &values, &ends, bootstrap, gamma, lambda);
        let tail = if terminal { 0.0 } else { bootstrap };
        let oracle = brute_force_gae(&rewards, &values, tail, gamma, lambda);
        for t in 0..len {
            assert!((adv[t] - oracle[t]).abs() < 1e-12, "{} vs {}", adv[t], oracle[t]);
            assert_eq!(ret[t], adv[t] + values[t]);
        }
    }
}

#[test]
fn gae_respects_episode_boundaries() {
    let rewards = [0.5, -0.2, 0.9, 0.1, 0.3];
    let values = [0.1, 0.4, -0.3, 0.2, 0.6];
    let ends = [false, true, false, false, false];
    let (adv, _) = compute_gae(&rewards, &values, &ends, 0.7, 0.9, 0.8);
    let first = brute_force_gae(&rewards[..2], &values[..2], 0.0, 0.9, 0.8);
    let second = brute_force_gae(&rewards[2..], &values[2..], 0.7, 0.9, 0.8);
    let joined: Vec<f64> = first.into_iter().chain(second).collect();
    for (a, b) in adv.iter().zip(&joined) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gae_special_cases() {
    let rewards = [1.0, 2.0, 3.0];
    let values = [0.5, 0.25, 0.125];
    let (adv, _) = compute_gae(&rewards, &values, &[false; 3], 4.0, 1.0, 1.0);
    assert_eq!(adv, vec![10.0 - 0.5, 9.0 - 0.25, 7.0 - 0.125]);
    let (zero, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95);
    assert_eq!(zero, vec![0.0; 4]);
    let (single, _) = compute_gae(&[0.3], &[0.2], &[false], 0.5, 0.9, 0.95);
    assert!((single[0] - (0.3 + 0.9 * 0.5 - 0.2)).abs() < 1e-15);
}

#[test]
fn sampling_is_seeded_and_unbiased() {
    let mean = [0.2, -0.4, 1.0];
    let log_std = [-0.5, 0.0, -1.0];
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..5).map(|_| sample_action(&mean, &log_std, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let mut sums = [0.0; 3];
    for _ in 0..n {
        let s = sample_action(&mean, &log_std, &mut rng);
        for (acc, v) in sums.iter_mut().zip(&s.raw) {
            *acc += v;
        }
        assert!(s.action.iter().all(|a| a.abs() <= ACTION_LIMIT));
        assert_eq!(s.log_prob, gaussian_log_prob(&s.raw, &mean, &log_std));
    }
    for i in 0..3 {
        let sigma = f64::exp(log_std[i]);
        assert!((sums[i] / n as f64 - mean[i]).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = sample_action(&[0.3, 2.0, -3.0], &[-60.0; 3], &mut rng);
    assert_eq!(s.action, vec![0.3, 1.5, -1.5]);
}

fn synthetic_batch(net: &PolicyNet, n: usize, seed: u64) -> RolloutBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = RolloutBatch::default();
    for i in 0..n {
        let obs: Vec<f64> = (0..net.obs_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mean, value) = net.forward(&obs).unwrap();
        let sample = sample_action(&mean, net.log_std.as_slice(), &mut rng);
        batch.push(obs, &sample, rng.gen_range(0.0..1.0), value, i % 7 == 6);
    }
    batch.finish(0.0, 0.99, 0.95);
    batch
}

#[test]
fn update_is_bit_reproducible() {
    let cfg = UpdateConfig {
        epochs: 3,
        minibatch_size: 8,
        loss: LossCoefficients { clip_epsilon: 0.2, value_coef: 0.5, entropy_coef: 0.0 },
        max_grad_norm: 0.5,
    };
    let run = || {
        let mut net = small_net(11);
        let batch = synthetic_batch(&net, 32, 12);
        let mut adam = Adam::new(&net, 3e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let stats = ppo_update(&mut net, &mut adam, &batch, &cfg, &mut rng).unwrap();
        (net, stats)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(sa.minibatches, 12);
    assert_ne!(a, small_net(11));
}

#[test]
fn non_finite_batch_is_discarded() {
    let mut net = small_net(14);
    let mut batch = synthetic_batch(&net, 16, 15);
    batch.returns[3] = f64::NAN;
    let before = net.clone();
    let cfg = UpdateConfig {
        epochs: 2,
        minibatch_size: 8,
        loss: LossCoefficients { clip_epsilon: 0.2, value_coef: 0.5, entropy_coef: 0.0 },
        max_grad_norm: 0.5,
    };
    let mut adam = Adam::new(&net, 3e-4);
    let stats = ppo_update(&mut net, &mut adam, &batch, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(stats.aborted);
    assert_eq!(net, before);
}

#[test]
fn schedule_follows_warmup_then_cycle() {
    let cfg = TrainConfig::default();
    assert!((0..100).all(|e| cfg.target_velocity(e) == 0.1));
    let next: Vec<f64> = (100..110).map(|e| cfg.target_velocity(e)).collect();
    assert_eq!(next, vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.05, 0.10, 0.15, 0.20, 0.25]);
    assert_eq!(cfg.num_updates(), 1465);
}

fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        total_steps: 1100,
        steps_per_update: 128,
        minibatch_size: 32,
        epochs_per_update: 2,
        hidden: vec![8, 8],
        episode_length: 10,
        checkpoint_every: 3,
        ..Default::default()
    }
}

#[test]
fn short_training_run_logs_the_schedule_and_is_deterministic() {
    let cfg = tiny_train_config();
    let mut checkpoints = Vec::new();
    let run = |checkpoints: &mut Vec<usize>| {
        train(&RobotConfig::default(), &cfg, 21, |p| {
            if p.checkpoint_due {
                checkpoints.push(p.update);
            }
            Ok(())
        })
        .unwrap()
    };
    let a = run(&mut checkpoints);
    let b = run(&mut Vec::new());
    assert_eq!(a.log, b.log);
    assert_eq!(a.policy, b.policy);
    assert_eq!(checkpoints, vec![3, 6, 9]);
    // 9 updates × 128 steps / 10 steps per episode
    assert_eq!(a.log.len(), 115);
    assert!(a.log[..100].iter().all(|r| r.target_velocity == 0.1));
    let cycle: Vec<f64> = a.log[100..105].iter().map(|r| r.target_velocity).collect();
    assert_eq!(cycle, VELOCITY_CYCLE.to_vec());
    assert_eq!(a.log[104].episode, 105);
}

#[test]
fn evaluation_is_deterministic_and_covers_45_targets() {
    let targets = evaluation_targets();
    assert_eq!(targets.len(), 45);
    assert_eq!(targets[0], 0.03);
    assert_eq!(targets[44], 0.25);
    assert!(targets.windows(2).all(|w| ((w[1] - w[0]) - 0.005).abs() < 1e-12));

    let out = train(&RobotConfig::default(), &tiny_train_config(), 2, |_| Ok(())).unwrap();
    let a = evaluate_policy(&out.policy, &RobotConfig::default(), &[0.1, 0.2]).unwrap();
    let b = evaluate_policy(&out.policy, &RobotConfig::default(), &[0.1, 0.2]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
}
