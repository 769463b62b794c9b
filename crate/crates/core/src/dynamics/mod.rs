//! Planar rigid-chain simulator of a wheeled snake robot.
//!
//! Modules are rigid boxes joined by vertical-axis revolute joints driven by
//! PD position servos. Passive wheels are folded into an anisotropic viscous
//! ground force on each link. The chain is integrated in reduced coordinates
//! with semi-implicit Euler substeps, so joints can never separate.

mod config;
mod model;
mod state;

pub use config::RobotConfig;
pub use model::{friction_force, servo_torque, RobotModel};
pub use state::{InitialPose, SimState, StepInfo};
