use crate::dynamics::{InitialPose, RobotConfig, RobotModel};
use crate::error::{Error, Result};
use crate::gait::{targets_at, GaitParams};
use crate::metrics::{summarize_run, EvalResult, PowerTrace};

/// Control steps per evaluation run.
pub const EVAL_STEPS: usize = 1000;
/// Leading control steps excluded from the metrics.
pub const WARMUP_STEPS: usize = 200;

/// Drives a fresh straight chain with the gait for `steps` control steps and
/// aggregates the metrics after `warmup`.
///
/// Velocity is the net displacement of the body's centre of mass over the
/// post-warmup window divided by its duration.
pub fn evaluate_gait(params: &GaitParams, model: &RobotModel, steps: usize, warmup: usize) -> Result<EvalResult> {
    if steps <= warmup {
        return Err(Error::validation("steps", format!("{steps} steps do not exceed warmup {warmup}")));
    }
    let cfg = model.config();
    let nj = model.num_joints();
    let mut state = model.reset(&InitialPose::Straight)?;
    let mut trace = PowerTrace::new();
    let mut start = state.com_position;
    for i in 0..steps {
        if i == warmup {
            start = state.com_position;
        }
        let t = i as f64 * cfg.control_dt;
        let targets: Vec<f64> = targets_at(params, t, nj)
            .into_iter()
            .map(|a| a.clamp(-cfg.joint_limit, cfg.joint_limit))
            .collect();
        let (next, info) = model.step(&state, &targets).map_err(|e| match e {
            Error::SimulationDiverged { sim_time } => Error::GaitDiverged { params: *params, sim_time },
            other => other,
        })?;
        trace.push(&info, cfg.gear);
        state = next;
    }
    let distance = (state.com_position - start).norm();
    let duration = (steps - warmup) as f64 * cfg.control_dt;
    summarize_run(&trace, cfg, distance, duration, warmup)
}

/// [`evaluate_gait`] with the standard 1000-step, 200-warmup protocol on a
/// freshly built model.
pub fn evaluate_gait_default(params: &GaitParams, config: &RobotConfig) -> Result<EvalResult> {
    let model = RobotModel::build(config.clone())?;
    evaluate_gait(params, &model, EVAL_STEPS, WARMUP_STEPS)
}
