//! Baseline optimizers over gait parameters: an exhaustive grid and Gaussian
//! process Bayesian optimization, both scored through the simulator.

mod bayes;
mod evaluate;
mod gp;
mod grid;

pub use bayes::{
    bayes_optimize, expected_improvement, expected_improvement_gaussian, minimize, BoConfig, BoEvaluation, BoResult,
    GaitBounds, Sample,
};
pub use evaluate::{evaluate_gait, evaluate_gait_default, EVAL_STEPS, WARMUP_STEPS};
pub use gp::{GpModel, Matern52};
pub use grid::{efficiency_frontier, enumerate_grid, grid_search, grid_search_resumable, GridOutcome, GridSpec};
