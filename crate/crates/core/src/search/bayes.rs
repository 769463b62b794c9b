//! Bayesian optimization with expected improvement on the unit cube.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use super::evaluate::{evaluate_gait, EVAL_STEPS, WARMUP_STEPS};
use super::gp::GpModel;
use crate::dynamics::RobotModel;
use crate::error::{Error, Result};
use crate::gait::GaitParams;
use crate::metrics::EvalResult;

const FALLBACK_PENALTY: f64 = 1e6;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` of a Gaussian with the given mean and
/// standard deviation.
pub fn expected_improvement_gaussian(mean: f64, sigma: f64, best: f64) -> f64 {
    let gap = best - mean;
    if !(sigma > 0.0) {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(model: &GpModel, query: &[f64], best_so_far: f64) -> f64 {
    let (mean, var) = model.predict(query);
    expected_improvement_gaussian(mean, var.sqrt(), best_so_far)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    /// Space-filling random samples before the surrogate takes over.
    pub n_explore: usize,
    /// Surrogate-guided samples.
    pub n_exploit: usize,
    /// Random candidates scored per acquisition.
    pub candidates: usize,
    /// Best candidates polished with a local simplex search.
    pub refine: usize,
    /// Fit the surrogate to `ln(objective)`; requires positive objectives.
    pub log_objective: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self { n_explore: 10, n_exploit: 100, candidates: 1024, refine: 4, log_objective: false }
    }
}

/// One evaluated point on the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub objective: f64,
    /// The objective was unavailable and replaced by a penalty.
    pub penalized: bool,
}

fn latin_hypercube(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

struct NegativeEi<'a> {
    model: &'a GpModel,
    best: f64,
}

impl CostFunction for NegativeEi<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let clamped: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(-expected_improvement(self.model, &clamped, self.best))
    }
}

fn propose(model: &GpModel, best: f64, dim: usize, cfg: &BoConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut scored: Vec<(f64, Vec<f64>)> = (0..cfg.candidates.max(1))
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            (expected_improvement(model, &x, best), x)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut winner = scored[0].clone();
    for (ei, start) in scored.iter().take(cfg.refine) {
        let simplex: Vec<Vec<f64>> = std::iter::once(start.clone())
            .chain((0..dim).map(|i| {
                let mut v = start.clone();
                v[i] = if v[i] > 0.5 { v[i] - 0.05 } else { v[i] + 0.05 };
                v
            }))
            .collect();
        let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-10) else { continue };
        let Ok(res) = Executor::new(NegativeEi { model, best }, solver)
            .configure(|s| s.max_iters(60))
            .run()
        else {
            continue;
        };
        let state = res.state();
        if let Some(x) = state.best_param.as_ref() {
            let refined = -state.best_cost;
            if refined > *ei && refined > winner.0 {
                winner = (refined, x.iter().map(|v| v.clamp(0.0, 1.0)).collect());
            }
        }
    }
    winner.1
}

/// Minimizes `objective` over `[0, 1]^dim`.
///
/// `objective` returns `None` for failed evaluations; those are recorded with
/// a penalty of ten times the worst value seen so far. Returns every sample in
/// evaluation order.
pub fn minimize<F>(dim: usize, cfg: &BoConfig, seed: u64, mut objective: F) -> Result<Vec<Sample>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    if dim == 0 || cfg.n_explore < 2 {
        return Err(Error::validation("n_explore", "need a positive dimension and at least 2 exploration samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<Sample> = Vec::with_capacity(cfg.n_explore + cfg.n_exploit);

    let record = |x: Vec<f64>, value: Option<f64>, history: &mut Vec<Sample>| {
        let value = value.filter(|v| v.is_finite() && (!cfg.log_objective || *v > 0.0));
        let sample = match value {
            Some(objective) => Sample { x, objective, penalized: false },
            None => {
                let worst = history
                    .iter()
                    .filter(|s| !s.penalized)
                    .map(|s| s.objective)
                    .fold(f64::NEG_INFINITY, f64::max);
                let objective = if worst.is_finite() && worst > 0.0 { 10.0 * worst } else { FALLBACK_PENALTY };
                Sample { x, objective, penalized: true }
            }
        };
        history.push(sample);
    };

    for x in latin_hypercube(cfg.n_explore, dim, &mut rng) {
        let value = objective(&x);
        record(x, value, &mut history);
    }

    for _ in 0..cfg.n_exploit {
        let inputs: Vec<Vec<f64>> = history.iter().map(|s| s.x.clone()).collect();
        let transform = |v: f64| if cfg.log_objective { v.ln() } else { v };
        let targets: Vec<f64> = history.iter().map(|s| transform(s.objective)).collect();
        let best = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let x = match GpModel::fit(inputs, targets) {
            Ok(model) => propose(&model, best, dim, cfg, &mut rng),
            Err(e) => {
                log::warn!("surrogate fit failed ({e}); sampling at random");
                (0..dim).map(|_| rng.gen::<f64>()).collect()
            }
        };
        let value = objective(&x);
        record(x, value, &mut history);
    }
    Ok(history)
}

/// Search box for the gait shape parameters; ω stays fixed per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitBounds {
    pub y: (f64, f64),
    pub amplitude_deg: (f64, f64),
    pub lambda_deg: (f64, f64),
}

impl Default for GaitBounds {
    fn default() -> Self {
        Self { y: (0.1, 0.4), amplitude_deg: (40.0, 180.0), lambda_deg: (40.0, 120.0) }
    }
}

impl GaitBounds {
    pub fn to_params(&self, omega: f64, unit: &[f64]) -> GaitParams {
        let lerp = |(lo, hi): (f64, f64), u: f64| lo + (hi - lo) * u.clamp(0.0, 1.0);
        GaitParams::unchecked(
            omega,
            lerp(self.y, unit[0]),
            lerp(self.amplitude_deg, unit[1]),
            lerp(self.lambda_deg, unit[2]),
        )
    }

    pub fn to_unit(&self, params: &GaitParams) -> Vec<f64> {
        let inv = |(lo, hi): (f64, f64), v: f64| (v - lo) / (hi - lo);
        vec![
            inv(self.y, params.y),
            inv(self.amplitude_deg, params.amplitude_deg),
            inv(self.lambda_deg, params.lambda_deg),
        ]
    }
}

/// One simulator evaluation made during a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct BoEvaluation {
    pub params: GaitParams,
    /// APPV, or the penalty that replaced it.
    pub objective: f64,
    pub penalized: bool,
    /// `None` when the simulation failed.
    pub result: Option<EvalResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub omega: f64,
    pub best_params: GaitParams,
    /// Lowest APPV found, W·s/m.
    pub best_objective: f64,
    /// Every evaluation in order.
    pub history: Vec<BoEvaluation>,
}

/// Searches the gait shape at fixed `omega` for the lowest averaged power per
/// velocity. APPV is strictly positive, so the surrogate always models its
/// logarithm regardless of `cfg.log_objective`.
pub fn bayes_optimize(
    omega: f64,
    bounds: &GaitBounds,
    cfg: &BoConfig,
    model: &RobotModel,
    seed: u64,
) -> Result<BoResult> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::validation("omega", format!("must be positive, got {omega}")));
    }
    let cfg = BoConfig { log_objective: true, ..cfg.clone() };
    let mut results = Vec::with_capacity(cfg.n_explore + cfg.n_exploit);
    let samples = minimize(3, &cfg, seed, |unit| {
        let params = bounds.to_params(omega, unit);
        match evaluate_gait(&params, model, EVAL_STEPS, WARMUP_STEPS) {
            Ok(r) => {
                let appv = r.appv;
                results.push(Some(r));
                appv
            }
            Err(e) => {
                log::warn!("gait evaluation failed: {e}");
                results.push(None);
                None
            }
        }
    })?;
    Ok(collect_result(omega, bounds, samples, results))
}

pub(crate) fn collect_result(
    omega: f64,
    bounds: &GaitBounds,
    samples: Vec<Sample>,
    results: Vec<Option<EvalResult>>,
) -> BoResult {
    let history: Vec<BoEvaluation> = samples
        .into_iter()
        .zip(results)
        .map(|(s, result)| BoEvaluation {
            params: bounds.to_params(omega, &s.x),
            objective: s.objective,
            penalized: s.penalized,
            result,
        })
        .collect();
    let best = history
        .iter()
        .filter(|e| !e.penalized)
        .chain(history.iter())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("history is non-empty");
    BoResult { omega, best_params: best.params, best_objective: best.objective, history }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_examples() {
        assert_eq!(expected_improvement_gaussian(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement_gaussian(0.75, 0.0, 1.0), 0.25);
        assert_eq!(expected_improvement_gaussian(2.0, 0.0, 1.0), 0.0);
        // φ(0) = 1/√(2π)
        let ei = expected_improvement_gaussian(3.0, 1.0, 3.0);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((ei - 0.39894).abs() < 1e-5);
    }

    #[test]
    fn ei_never_negative() {
        for mean in [-5.0, -0.1, 0.0, 0.3, 8.0] {
            for sigma in [0.0, 1e-9, 0.2, 3.0] {
                assert!(expected_improvement_gaussian(mean, sigma, 0.0) >= 0.0);
            }
        }
    }

    #[test]
    fn ei_vanishes_at_noiseless_observation_above_best() {
        use crate::search::gp::Matern52;
        let kernel = Matern52 { length_scales: vec![0.3], signal_variance: 1.0 };
        let gp = GpModel::with_hyperparameters(vec![vec![0.2], vec![0.7]], vec![1.0, 3.0], kernel, 0.0).unwrap();
        assert!(expected_improvement(&gp, &[0.7], 1.0) < 1e-6);
    }

    #[test]
    fn latin_hypercube_fills_every_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = latin_hypercube(10, 3, &mut rng);
        for d in 0..3 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 10.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn penalties_replace_failed_evaluations() {
        let cfg = BoConfig { n_explore: 4, n_exploit: 3, candidates: 64, refine: 1, log_objective: false };
        let mut calls = 0;
        let history = minimize(2, &cfg, 3, |x| {
            calls += 1;
            if calls == 2 { None } else { Some(x[0] + x[1] + 1.0) }
        })
        .unwrap();
        assert_eq!(history.len(), 7);
        assert!(history[1].penalized);
        assert_eq!(history[1].objective, 10.0 * history[0].objective);
    }

    #[test]
    fn bounds_map_both_ways() {
        let b = GaitBounds::default();
        let p = b.to_params(1.5, &[0.0, 1.0, 0.5]);
        assert_eq!((p.y, p.amplitude_deg, p.lambda_deg), (0.1, 180.0, 80.0));
        assert_eq!(p.x + p.y, 1.0);
        let u = b.to_unit(&p);
        assert!((u[0] - 0.0).abs() < 1e-12 && (u[1] - 1.0).abs() < 1e-12 && (u[2] - 0.5).abs() < 1e-12);
    }
}
