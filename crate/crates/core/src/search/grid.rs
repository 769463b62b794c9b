use std::collections::BTreeMap;

use rayon::prelude::*;

use super::evaluate::{evaluate_gait, EVAL_STEPS, WARMUP_STEPS};
use crate::dynamics::{RobotConfig, RobotModel};
use crate::error::{Error, Result};
use crate::gait::GaitParams;
use crate::metrics::EvalResult;

/// Axis values of the exhaustive gait grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub omega_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub amplitude_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            omega_values: (1..=12).map(|i| i as f64 * 0.25).collect(),
            y_values: vec![0.1, 0.2, 0.3, 0.4],
            amplitude_values: (4..=18).map(|i| i as f64 * 10.0).collect(),
            lambda_values: (4..=12).map(|i| i as f64 * 10.0).collect(),
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.omega_values.len() * self.y_values.len() * self.amplitude_values.len() * self.lambda_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same grid restricted to one temporal frequency.
    pub fn at_omega(&self, omega: f64) -> Self {
        Self { omega_values: vec![omega], ..self.clone() }
    }
}

/// Cartesian product in ω, y, A, λ order (λ varies fastest).
pub fn enumerate_grid(spec: &GridSpec) -> Vec<GaitParams> {
    let mut out = Vec::with_capacity(spec.len());
    for &omega in &spec.omega_values {
        for &y in &spec.y_values {
            for &a in &spec.amplitude_values {
                for &l in &spec.lambda_values {
                    out.push(GaitParams::unchecked(omega, y, a, l));
                }
            }
        }
    }
    out
}

/// One evaluated grid point; failures are kept rather than aborting the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub index: usize,
    pub params: GaitParams,
    pub result: Result<EvalResult>,
}

/// Evaluates every grid point, in grid order.
pub fn grid_search(spec: &GridSpec, config: &RobotConfig, workers: usize) -> Result<Vec<GridOutcome>> {
    grid_search_resumable(spec, config, workers, &BTreeMap::new(), |_| Ok(()))
}

/// Evaluates the grid points not already present in `completed`, handing each
/// fresh outcome to `sink` in grid order, and returns the full grid.
///
/// Points are evaluated in batches on a pool of `workers` threads. `sink` is
/// only ever called from the calling thread.
pub fn grid_search_resumable<S>(
    spec: &GridSpec,
    config: &RobotConfig,
    workers: usize,
    completed: &BTreeMap<usize, GridOutcome>,
    mut sink: S,
) -> Result<Vec<GridOutcome>>
where
    S: FnMut(&GridOutcome) -> Result<()>,
{
    let model = RobotModel::build(config.clone())?;
    let grid = enumerate_grid(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let todo: Vec<usize> = (0..grid.len()).filter(|i| !completed.contains_key(i)).collect();
    let batch = (workers.max(1) * 8).max(16);

    let mut fresh = BTreeMap::new();
    for chunk in todo.chunks(batch) {
        let outcomes: Vec<GridOutcome> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&index| GridOutcome {
                    index,
                    params: grid[index],
                    result: evaluate_gait(&grid[index], &model, EVAL_STEPS, WARMUP_STEPS),
                })
                .collect()
        });
        for outcome in outcomes {
            sink(&outcome)?;
            fresh.insert(outcome.index, outcome);
        }
    }

    Ok((0..grid.len())
        .map(|i| fresh.remove(&i).or_else(|| completed.get(&i).cloned()).expect("every index evaluated"))
        .collect())
}

/// Lowest-power point per velocity bin, keeping only bins that are not beaten
/// by a faster bin. Power along the returned frontier never decreases with
/// velocity. Points are `(velocity, power)`.
pub fn efficiency_frontier(points: &[(f64, f64)], bin_width: f64) -> Vec<(f64, f64)> {
    let mut bins: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for &(v, p) in points {
        if !(v.is_finite() && p.is_finite() && v > 0.0) {
            continue;
        }
        let key = (v / bin_width).floor() as i64;
        bins.entry(key)
            .and_modify(|best| {
                if p < best.1 {
                    *best = (v, p);
                }
            })
            .or_insert((v, p));
    }
    let mut frontier: Vec<(f64, f64)> = Vec::new();
    let mut cheapest_faster = f64::INFINITY;
    for &(v, p) in bins.values().rev() {
        if p <= cheapest_faster {
            frontier.push((v, p));
            cheapest_faster = p;
        }
    }
    frontier.reverse();
    frontier
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_6480_points() {
        let spec = GridSpec::default();
        assert_eq!(spec.omega_values.len(), 12);
        assert_eq!(spec.amplitude_values.len(), 15);
        assert_eq!(spec.lambda_values.len(), 9);
        assert_eq!(spec.len(), 6480);
        let grid = enumerate_grid(&spec);
        assert_eq!(grid.len(), 6480);
        assert_eq!(grid[0], GaitParams::unchecked(0.25, 0.1, 40.0, 40.0));
        assert_eq!(grid[1], GaitParams::unchecked(0.25, 0.1, 40.0, 50.0));
        assert_eq!(grid[6479], GaitParams::unchecked(3.0, 0.4, 180.0, 120.0));
        assert!(grid.iter().all(|p| p.x == 1.0 - p.y));
    }

    #[test]
    fn single_value_axes() {
        let spec = GridSpec {
            omega_values: vec![1.0],
            y_values: vec![0.2],
            amplitude_values: vec![60.0],
            lambda_values: vec![90.0],
        };
        assert_eq!(enumerate_grid(&spec).len(), 1);
    }

    #[test]
    fn frontier_is_monotone() {
        let pts = vec![(0.05, 0.9), (0.06, 0.2), (0.12, 0.5), (0.13, 0.1), (0.21, 0.8), (0.3, 0.7), (0.0, 0.0)];
        let f = efficiency_frontier(&pts, 0.05);
        assert_eq!(f, vec![(0.13, 0.1), (0.3, 0.7)]);
        assert!(f.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }
}
