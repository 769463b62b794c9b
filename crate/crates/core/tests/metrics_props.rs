use proptest::prelude::*;
use sgl_core::dynamics::{RobotConfig, StepInfo};
use sgl_core::metrics::*;
use sgl_core::rl::{combined_reward, velocity_reward, RewardParams};

fn trace(torques: &[Vec<f64>], speeds: &[Vec<f64>], gear: f64) -> PowerTrace {
    let mut t = PowerTrace::new();
    for (tau, v) in torques.iter().zip(speeds) {
        let info = StepInfo {
            torques: tau.clone(),
            joint_velocities: v.clone(),
            head_velocity: 0.0,
            instantaneous_power: total_power(tau, v).unwrap(),
        };
        t.push(&info, gear);
    }
    t
}

fn rows(k: usize, bound: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-bound..bound, 8), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn transport_metrics_recover_power(power in 0.0f64..500.0, velocity in 1e-4f64..2.0) {
        let cfg = RobotConfig::default();
        let m = cfg.total_mass();
        let cot = cost_of_transport(power, m, velocity).unwrap();
        prop_assert!((cot * m * GRAVITY * velocity - power).abs() <= 1e-12 * power.max(1e-300));
        let a = appv(power, velocity).unwrap();
        prop_assert!((a * velocity - power).abs() <= 1e-12 * power.max(1e-300));
    }

    #[test]
    fn mean_power_is_the_sum_of_joint_powers(
        (tau, v) in (1usize..30).prop_flat_map(|k| (rows(k, 3.5), rows(k, 12.0)))
    ) {
        let cfg = RobotConfig::default();
        let t = trace(&tau, &v, cfg.gear);
        let direct: f64 = tau
            .iter()
            .zip(&v)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum::<f64>())
            .sum::<f64>()
            / tau.len() as f64;
        let by_joint: f64 = (0..8).map(|j| joint_avg_power(&t, j).unwrap()).sum();
        prop_assert!((direct - by_joint).abs() <= 1e-12 * direct.max(1e-300));
        let r = summarize_run(&t, &cfg, 1.0, 2.0, 0).unwrap();
        prop_assert!((r.mean_power - direct).abs() <= 1e-12 * direct.max(1e-300));
        prop_assert!((r.per_joint_power.iter().sum::<f64>() - r.mean_power).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn normalized_power_stays_in_unit_interval(
        forces in proptest::collection::vec(-100.0f64..100.0, 8),
        speeds in proptest::collection::vec(-50.0f64..50.0, 8),
    ) {
        let p = normalized_power(&forces, &speeds, &RobotConfig::default());
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn combined_reward_falls_with_power(target in 0.0f64..0.3, err in 0.0f64..0.19, a in 0.001f64..0.998, gap in 1e-3f64..0.5) {
        let p = RewardParams::default();
        let b = (a + gap).min(0.999);
        prop_assume!(b > a);
        let hi = combined_reward(target, target + err, a, &p);
        let lo = combined_reward(target, target + err, b, &p);
        prop_assert!(lo < hi, "{lo} !< {hi}");
    }

    #[test]
    fn velocity_reward_falls_with_error(target in 0.0f64..0.3, e1 in 0.0f64..0.19, gap in 1e-4f64..0.1, sign in prop::bool::ANY) {
        let p = RewardParams::default();
        let e2 = e1 + gap;
        let s = if sign { 1.0 } else { -1.0 };
        let near = velocity_reward(target, target + s * e1, &p);
        let far = velocity_reward(target, target + s * e2, &p);
        if e2 < p.spread {
            prop_assert!(far < near);
        } else {
            prop_assert_eq!(far, 0.0);
        }
    }
}
