//! Snake gait laboratory: a planar snake-robot simulator with a
//! gait-equation controller, energy-efficiency metrics, grid and Bayesian
//! parameter search, and a PPO gait learner.

pub mod dynamics;
pub mod error;

pub use error::{Error, Result};
pub mod gait;
pub mod metrics;
pub mod rl;
pub mod search;
