//! Row formats of the result tables.

use sgl_core::gait::GaitParams;
use sgl_core::metrics::EvalResult;

use crate::error::{RunError, RunResult};
use crate::table::{self, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Diverged,
    Failed,
}

impl Status {
    pub fn of<T>(r: &sgl_core::Result<T>) -> Self {
        match r {
            Ok(_) => Status::Ok,
            Err(sgl_core::Error::GaitDiverged { .. } | sgl_core::Error::SimulationDiverged { .. }) => Status::Diverged,
            Err(_) => Status::Failed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::Failed => "error",
        }
    }

    pub fn parse(s: &str) -> RunResult<Self> {
        match s {
            "ok" => Ok(Status::Ok),
            "diverged" => Ok(Status::Diverged),
            "error" => Ok(Status::Failed),
            _ => Err(RunError::runtime(format!("unknown status `{s}`"))),
        }
    }
}

/// Failed evaluations of a run, by cause.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FailureCounts {
    pub diverged: usize,
    pub other: usize,
}

impl FailureCounts {
    pub fn add(&mut self, status: Status) {
        match status {
            Status::Ok => {}
            Status::Diverged => self.diverged += 1,
            Status::Failed => self.other += 1,
        }
    }
}

fn metric_header(num_joints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["status", "velocity", "power", "appv", "cot"].map(String::from).to_vec();
    h.extend((1..=num_joints).map(|j| format!("p_joint{j}")));
    h
}

fn metric_cells(status: Status, result: Option<&EvalResult>, num_joints: usize) -> Vec<String> {
    let mut cells = vec![status.as_str().to_string()];
    match result {
        Some(r) => {
            cells.extend([r.mean_velocity.to_string(), r.mean_power.to_string(), table::fmt_opt(r.appv), table::fmt_opt(r.cot)]);
            cells.extend(r.per_joint_power.iter().map(f64::to_string));
        }
        None => cells.extend(std::iter::repeat(String::new()).take(4 + num_joints)),
    }
    cells
}

fn parse_metrics(cells: &[String]) -> RunResult<(Status, Option<EvalResult>)> {
    let status = Status::parse(&cells[0])?;
    if status != Status::Ok {
        return Ok((status, None));
    }
    let result = EvalResult {
        mean_velocity: table::num(&cells[1])?,
        mean_power: table::num(&cells[2])?,
        appv: table::opt_num(&cells[3])?,
        cot: table::opt_num(&cells[4])?,
        per_joint_power: cells[5..].iter().map(|c| table::num(c)).collect::<RunResult<_>>()?,
    };
    Ok((status, Some(result)))
}

fn gait_cells(p: &GaitParams) -> [String; 4] {
    [p.omega.to_string(), p.y.to_string(), p.amplitude_deg.to_string(), p.lambda_deg.to_string()]
}

fn parse_gait(cells: &[String]) -> RunResult<GaitParams> {
    Ok(GaitParams::unchecked(table::num(&cells[0])?, table::num(&cells[1])?, table::num(&cells[2])?, table::num(&cells[3])?))
}

fn check_width(t: &Table, fixed: usize) -> RunResult<()> {
    if let Some(row) = t.rows.iter().find(|r| r.len() != t.header.len()) {
        return Err(RunError::runtime(format!("row has {} cells, header has {}", row.len(), t.header.len())));
    }
    if t.header.len() < fixed {
        return Err(RunError::runtime("table is missing columns"));
    }
    Ok(())
}

/// One evaluated gait.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitRecord {
    pub index: usize,
    pub params: GaitParams,
    pub status: Status,
    pub result: Option<EvalResult>,
}

pub fn grid_header(num_joints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["index", "omega", "y", "amplitude_deg", "lambda_deg"].map(String::from).to_vec();
    h.extend(metric_header(num_joints));
    h
}

pub fn grid_row(r: &GaitRecord, num_joints: usize) -> Vec<String> {
    let mut row = vec![r.index.to_string()];
    row.extend(gait_cells(&r.params));
    row.extend(metric_cells(r.status, r.result.as_ref(), num_joints));
    row
}

pub fn parse_grid(t: &Table) -> RunResult<Vec<GaitRecord>> {
    check_width(t, 10)?;
    t.rows
        .iter()
        .map(|row| {
            let index = row[0].parse().map_err(|_| RunError::runtime(format!("bad index `{}`", row[0])))?;
            let (status, result) = parse_metrics(&row[5..])?;
            Ok(GaitRecord { index, params: parse_gait(&row[1..5])?, status, result })
        })
        .collect()
}

/// One evaluation of a BO trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesRecord {
    pub iteration: usize,
    pub params: GaitParams,
    pub objective: f64,
    pub penalized: bool,
    pub status: Status,
    pub result: Option<EvalResult>,
}

pub fn bayes_header(num_joints: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["iteration", "omega", "y", "amplitude_deg", "lambda_deg", "objective", "penalized"].map(String::from).to_vec();
    h.extend(metric_header(num_joints));
    h
}

pub fn bayes_row(r: &BayesRecord, num_joints: usize) -> Vec<String> {
    let mut row = vec![r.iteration.to_string()];
    row.extend(gait_cells(&r.params));
    row.push(r.objective.to_string());
    row.push(r.penalized.to_string());
    row.extend(metric_cells(r.status, r.result.as_ref(), num_joints));
    row
}

pub fn parse_bayes(t: &Table) -> RunResult<Vec<BayesRecord>> {
    check_width(t, 12)?;
    t.rows
        .iter()
        .map(|row| {
            let iteration = row[0].parse().map_err(|_| RunError::runtime(format!("bad iteration `{}`", row[0])))?;
            let penalized = row[6].parse().map_err(|_| RunError::runtime(format!("bad flag `{}`", row[6])))?;
            let (status, result) = parse_metrics(&row[7..])?;
            Ok(BayesRecord {
                iteration,
                params: parse_gait(&row[1..5])?,
                objective: table::num(&row[5])?,
                penalized,
                status,
                result,
            })
        })
        .collect()
}

/// One policy evaluation at a target velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub target: f64,
    pub status: Status,
    pub result: Option<EvalResult>,
}

pub fn eval_header(num_joints: usize) -> Vec<String> {
    let mut h = vec!["target".to_string()];
    h.extend(metric_header(num_joints));
    h
}

pub fn eval_row(r: &EvalRecord, num_joints: usize) -> Vec<String> {
    let mut row = vec![r.target.to_string()];
    row.extend(metric_cells(r.status, r.result.as_ref(), num_joints));
    row
}

pub fn parse_eval(t: &Table) -> RunResult<Vec<EvalRecord>> {
    check_width(t, 6)?;
    t.rows
        .iter()
        .map(|row| {
            let (status, result) = parse_metrics(&row[1..])?;
            Ok(EvalRecord { target: table::num(&row[0])?, status, result })
        })
        .collect()
}
