//! Energy and efficiency metrics over recorded torque/velocity traces.
//!
//! All power is mechanical shaft power counted as `|τ φ̇|`, so braking costs
//! energy just like driving does.

use crate::dynamics::{RobotConfig, StepInfo};
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Per-step actuator record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerTrace {
    /// `k × joints`, N·m.
    pub torques: Vec<Vec<f64>>,
    /// `k × joints`, rad/s.
    pub joint_velocities: Vec<Vec<f64>>,
    /// `k`, m/s.
    pub head_speeds: Vec<f64>,
    /// `k × joints`, actuator force `torque / gear`, N.
    pub forces: Vec<Vec<f64>>,
}

impl PowerTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, info: &StepInfo, gear: f64) {
        self.forces.push(info.torques.iter().map(|t| t / gear).collect());
        self.torques.push(info.torques.clone());
        self.joint_velocities.push(info.joint_velocities.clone());
        self.head_speeds.push(info.head_velocity);
    }

    pub fn len(&self) -> usize {
        self.head_speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head_speeds.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.torques.first().map_or(0, Vec::len)
    }

    /// Rows `from..` as a new trace.
    pub fn window(&self, from: usize) -> PowerTrace {
        let from = from.min(self.len());
        PowerTrace {
            torques: self.torques[from..].to_vec(),
            joint_velocities: self.joint_velocities[from..].to_vec(),
            head_speeds: self.head_speeds[from..].to_vec(),
            forces: self.forces[from..].to_vec(),
        }
    }

    fn check(&self) -> Result<()> {
        let k = self.len();
        if k == 0 {
            return Err(Error::validation("trace", "needs at least one step"));
        }
        if self.torques.len() != k || self.joint_velocities.len() != k || self.forces.len() != k {
            return Err(Error::validation("trace", "containers disagree on step count"));
        }
        let nj = self.num_joints();
        let ragged = self
            .torques
            .iter()
            .chain(&self.joint_velocities)
            .chain(&self.forces)
            .any(|row| row.len() != nj);
        if ragged {
            return Err(Error::validation("trace", "rows disagree on joint count"));
        }
        Ok(())
    }
}

/// Per-run aggregate of the efficiency metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_velocity: f64,
    pub mean_power: f64,
    pub per_joint_power: Vec<f64>,
    /// `None` when the robot did not move.
    pub appv: Option<f64>,
    pub cot: Option<f64>,
}

impl EvalResult {
    pub fn csv_header(num_joints: usize) -> String {
        let mut cols = vec!["velocity".to_string(), "power".into(), "appv".into(), "cot".into()];
        cols.extend((1..=num_joints).map(|j| format!("p_joint{j}")));
        cols.join(",")
    }

    /// One CSV row in [`EvalResult::csv_header`] order. Undefined metrics are
    /// left empty.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut cols = vec![
            self.mean_velocity.to_string(),
            self.mean_power.to_string(),
            opt(self.appv),
            opt(self.cot),
        ];
        cols.extend(self.per_joint_power.iter().map(f64::to_string));
        cols.join(",")
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() < 4 {
            return Err(Error::Config(format!("eval row has {} fields", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Config(format!("not a number: `{s}`")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) }
        };
        Ok(Self {
            mean_velocity: num(fields[0])?,
            mean_power: num(fields[1])?,
            appv: opt(fields[2])?,
            cot: opt(fields[3])?,
            per_joint_power: fields[4..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        })
    }
}

/// Average shaft power of joint `joint` (0-based) over the trace, W.
pub fn joint_avg_power(trace: &PowerTrace, joint: usize) -> Result<f64> {
    trace.check()?;
    let nj = trace.num_joints();
    if joint >= nj {
        return Err(Error::Index { index: joint, len: nj });
    }
    let sum: f64 = trace
        .torques
        .iter()
        .zip(&trace.joint_velocities)
        .map(|(t, v)| (t[joint] * v[joint]).abs())
        .sum();
    Ok(sum / trace.len() as f64)
}

/// Instantaneous power of all actuators, W.
pub fn total_power(torques: &[f64], joint_velocities: &[f64]) -> Result<f64> {
    if torques.len() != joint_velocities.len() {
        return Err(Error::validation(
            "joint_velocities",
            format!("length {} does not match {} torques", joint_velocities.len(), torques.len()),
        ));
    }
    Ok(torques.iter().zip(joint_velocities).map(|(t, v)| (t * v).abs()).sum())
}

/// Actuator power relative to each actuator's peak force × peak speed,
/// averaged over joints. The lever arm cancels per joint. Clamped to 1 so
/// transient overspeed cannot push it past saturation.
pub fn normalized_power_with_gears(
    forces: &[f64],
    gears: &[f64],
    joint_velocities: &[f64],
    force_limit: f64,
    max_joint_speed: f64,
) -> f64 {
    let n = forces.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = forces
        .iter()
        .zip(gears)
        .zip(joint_velocities)
        .map(|((f, h), v)| (f * h * v).abs() / (force_limit * h * max_joint_speed))
        .sum();
    (sum / n as f64).min(1.0)
}

pub fn normalized_power(forces: &[f64], joint_velocities: &[f64], config: &RobotConfig) -> f64 {
    let gears = vec![config.gear; forces.len()];
    normalized_power_with_gears(forces, &gears, joint_velocities, config.force_limit, config.max_joint_speed)
}

pub fn cost_of_transport(mean_power: f64, total_mass: f64, velocity: f64) -> Result<f64> {
    if !(velocity > 0.0) {
        return Err(Error::UndefinedMetric { metric: "cot", velocity });
    }
    if !(total_mass > 0.0) {
        return Err(Error::validation("total_mass", "must be positive"));
    }
    Ok(mean_power / (total_mass * GRAVITY * velocity))
}

/// Averaged power per velocity, W·s/m.
pub fn appv(mean_power: f64, velocity: f64) -> Result<f64> {
    if !(velocity > 0.0) {
        return Err(Error::UndefinedMetric { metric: "appv", velocity });
    }
    Ok(mean_power / velocity)
}

/// Aggregates a run over everything after the first `warmup_steps` rows.
///
/// `distance` and `duration` describe the same post-warmup window.
pub fn summarize_run(
    trace: &PowerTrace,
    config: &RobotConfig,
    distance: f64,
    duration: f64,
    warmup_steps: usize,
) -> Result<EvalResult> {
    trace.check()?;
    if trace.len() <= warmup_steps {
        return Err(Error::validation(
            "warmup_steps",
            format!("trace has {} steps, warmup is {warmup_steps}", trace.len()),
        ));
    }
    if !(duration > 0.0) {
        return Err(Error::validation("duration", "must be positive"));
    }
    let window = trace.window(warmup_steps);
    let per_joint_power = (0..window.num_joints())
        .map(|j| joint_avg_power(&window, j))
        .collect::<Result<Vec<_>>>()?;
    let mut power_sum = 0.0;
    for (t, v) in window.torques.iter().zip(&window.joint_velocities) {
        power_sum += total_power(t, v)?;
    }
    let mean_power = power_sum / window.len() as f64;
    let mean_velocity = distance / duration;
    Ok(EvalResult {
        mean_velocity,
        mean_power,
        per_joint_power,
        appv: appv(mean_power, mean_velocity).ok(),
        cot: cost_of_transport(mean_power, config.total_mass(), mean_velocity).ok(),
    })
}
