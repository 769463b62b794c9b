//! Parameterized slithering gait: each joint follows a phase-shifted sine
//! whose amplitude grows linearly from head to tail.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Temporal frequency, rad/s.
    pub omega: f64,
    /// Amplitude fraction at the head joint.
    pub y: f64,
    /// Amplitude growth along the body; always `1 - y`.
    pub x: f64,
    pub amplitude_deg: f64,
    /// Phase lag between neighbouring joints, degrees.
    pub lambda_deg: f64,
}

impl GaitParams {
    pub fn new(omega: f64, y: f64, amplitude_deg: f64, lambda_deg: f64) -> Result<Self> {
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::validation("omega", format!("must be >= 0, got {omega}")));
        }
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::validation("y", format!("must lie in (0, 1), got {y}")));
        }
        if !(amplitude_deg > 0.0 && amplitude_deg <= 180.0) {
            return Err(Error::validation(
                "amplitude_deg",
                format!("must lie in (0, 180], got {amplitude_deg}"),
            ));
        }
        if !lambda_deg.is_finite() {
            return Err(Error::validation("lambda_deg", "must be finite"));
        }
        Ok(Self::unchecked(omega, y, amplitude_deg, lambda_deg))
    }

    /// Builds parameters without range checks (degenerate shapes included).
    pub fn unchecked(omega: f64, y: f64, amplitude_deg: f64, lambda_deg: f64) -> Self {
        Self { omega, y, x: 1.0 - y, amplitude_deg, lambda_deg }
    }

    /// Peak unclamped angle of joint `n`, rad.
    pub fn envelope(&self, n: usize, num_joints: usize) -> f64 {
        (n as f64 / num_joints as f64 * self.x + self.y) * self.amplitude_deg.to_radians()
    }

    pub fn csv_header() -> &'static str {
        "omega,y,amplitude_deg,lambda_deg"
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{}", self.omega, self.y, self.amplitude_deg, self.lambda_deg)
    }

    pub fn from_csv_fields(fields: &[&str]) -> Result<Self> {
        if fields.len() < 4 {
            return Err(Error::Config(format!("gait row has {} fields", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, s) in v.iter_mut().zip(fields) {
            *slot = s.trim().parse().map_err(|_| Error::Config(format!("not a number: `{s}`")))?;
        }
        Ok(Self::unchecked(v[0], v[1], v[2], v[3]))
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            omega: f64,
            y: f64,
            amplitude_deg: f64,
            lambda_deg: f64,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(raw.omega, raw.y, raw.amplitude_deg, raw.lambda_deg)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "omega = {:?}\ny = {:?}\namplitude_deg = {:?}\nlambda_deg = {:?}\n",
            self.omega, self.y, self.amplitude_deg, self.lambda_deg
        )
    }
}

/// Target angle of joint `n` (head joint = 0) at time `t`, clamped to ±90°.
pub fn joint_angle(params: &GaitParams, n: usize, t: f64, num_joints: usize) -> f64 {
    let phase = params.omega * t + params.lambda_deg.to_radians() * n as f64;
    (params.envelope(n, num_joints) * phase.sin()).clamp(-FRAC_PI_2, FRAC_PI_2)
}

pub fn targets_at(params: &GaitParams, t: f64, num_joints: usize) -> Vec<f64> {
    (0..num_joints).map(|n| joint_angle(params, n, t, num_joints)).collect()
}
