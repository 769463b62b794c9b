use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of the snake chain.
///
/// Every field can be overridden from a key-value file; missing keys fall back
/// to the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub num_modules: usize,
    /// Module length along the body axis, m.
    pub module_length: f64,
    pub module_width: f64,
    pub module_height: f64,
    /// kg/m³
    pub density: f64,
    /// Symmetric joint range, rad.
    pub joint_limit: f64,
    /// Actuator force bound, N.
    pub force_limit: f64,
    /// Actuator lever arm, m. Must equal half the module length.
    pub gear: f64,
    /// Viscous coefficient against sideways sliding, N·s/m per link.
    pub lateral_friction_coeff: f64,
    /// Viscous coefficient against rolling along the body axis, N·s/m per link.
    pub forward_damping_coeff: f64,
    /// Servo stiffness, N·m/rad.
    pub servo_kp: f64,
    /// Servo damping, N·m·s/rad.
    pub servo_kd: f64,
    pub physics_substep: f64,
    pub control_dt: f64,
    /// Normalization constant for joint speeds, rad/s.
    pub max_joint_speed: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            num_modules: 9,
            module_length: 0.35,
            module_width: 0.10,
            module_height: 0.05,
            density: 600.0,
            joint_limit: FRAC_PI_2,
            force_limit: 20.0,
            gear: 0.175,
            lateral_friction_coeff: 30.0,
            forward_damping_coeff: 0.3,
            servo_kp: 60.0,
            servo_kd: 3.0,
            physics_substep: 0.005,
            control_dt: 0.05,
            max_joint_speed: 6.0,
        }
    }
}

impl RobotConfig {
    pub fn num_joints(&self) -> usize {
        self.num_modules.saturating_sub(1)
    }

    pub fn module_mass(&self) -> f64 {
        self.density * self.module_length * self.module_width * self.module_height
    }

    pub fn total_mass(&self) -> f64 {
        self.num_modules as f64 * self.module_mass()
    }

    /// Largest torque magnitude a servo can deliver, N·m.
    pub fn max_torque(&self) -> f64 {
        self.force_limit * self.gear
    }

    /// Number of integration substeps per control step.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.physics_substep).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_modules < 2 {
            return Err(Error::validation("num_modules", "need at least 2 modules"));
        }
        let strictly_positive = [
            ("module_length", self.module_length),
            ("module_width", self.module_width),
            ("module_height", self.module_height),
            ("density", self.density),
            ("joint_limit", self.joint_limit),
            ("force_limit", self.force_limit),
            ("gear", self.gear),
            ("physics_substep", self.physics_substep),
            ("control_dt", self.control_dt),
            ("max_joint_speed", self.max_joint_speed),
        ];
        for (field, value) in strictly_positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(field, format!("must be positive, got {value}")));
            }
        }
        // Friction and gains may be switched off entirely.
        let non_negative = [
            ("lateral_friction_coeff", self.lateral_friction_coeff),
            ("forward_damping_coeff", self.forward_damping_coeff),
            ("servo_kp", self.servo_kp),
            ("servo_kd", self.servo_kd),
        ];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::validation(field, format!("must be non-negative, got {value}")));
            }
        }
        if self.joint_limit > std::f64::consts::PI {
            return Err(Error::validation("joint_limit", "must not exceed pi"));
        }
        if (self.gear - self.module_length / 2.0).abs() > 1e-12 * self.module_length {
            return Err(Error::validation(
                "gear",
                format!("must equal module_length / 2 = {}", self.module_length / 2.0),
            ));
        }
        let ratio = self.control_dt / self.physics_substep;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "control_dt",
                "must be an integer multiple of physics_substep",
            ));
        }
        Ok(())
    }

    /// Parses a key-value file (`key = value` per line, TOML syntax).
    pub fn from_kv_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("robot config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}
