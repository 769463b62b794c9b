//! Gaussian-process surrogate on the unit cube.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_JITTER: f64 = 1e-4;
const LOG_LENGTH_BOUNDS: (f64, f64) = (-4.6, 2.3); // 0.01 .. 10
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-3.0, 3.0);
const LOG_NOISE_BOUNDS: (f64, f64) = (-13.8, -2.3); // 1e-6 .. 0.1
const FIT_RESTARTS: usize = 4;

/// Matérn-5/2 kernel with one length-scale per input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Matern52 {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
}

impl Matern52 {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        let r = (5.0 * r2).sqrt();
        self.signal_variance * (1.0 + r + 5.0 / 3.0 * r2) * (-r).exp()
    }
}

/// Fitted GP posterior. Targets are standardized internally; predictions are
/// returned in the original units.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: Matern52,
    /// Observation noise in standardized units.
    pub noise_variance: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    jitter: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn standardize(targets: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-300 { var.sqrt() } else { 1.0 };
    (mean, scale, targets.iter().map(|y| (y - mean) / scale).collect())
}

fn gram(kernel: &Matern52, inputs: &[Vec<f64>], diag: f64) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += diag;
    }
    k
}

/// Cholesky with escalating diagonal jitter.
fn factor(kernel: &Matern52, inputs: &[Vec<f64>], noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = 0.0;
    loop {
        if let Some(chol) = gram(kernel, inputs, noise + jitter).cholesky() {
            return Ok((chol, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * 1.000_001 {
            return Err(Error::SingularKernel { jitter: MAX_JITTER });
        }
    }
}

fn neg_log_likelihood(kernel: &Matern52, noise: f64, inputs: &[Vec<f64>], y: &DVector<f64>) -> f64 {
    match factor(kernel, inputs, noise) {
        Ok((chol, _)) => {
            let alpha = chol.solve(y);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            0.5 * y.dot(&alpha) + 0.5 * log_det + 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
        }
        Err(_) => f64::INFINITY,
    }
}

struct Likelihood<'a> {
    inputs: &'a [Vec<f64>],
    y: DVector<f64>,
    dim: usize,
}

impl Likelihood<'_> {
    fn unpack(&self, theta: &[f64]) -> (Matern52, f64) {
        let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
        let length_scales = theta[..self.dim].iter().map(|&v| clamp(v, LOG_LENGTH_BOUNDS).exp()).collect();
        let signal_variance = clamp(theta[self.dim], LOG_SIGNAL_BOUNDS).exp();
        let noise = clamp(theta[self.dim + 1], LOG_NOISE_BOUNDS).exp();
        (Matern52 { length_scales, signal_variance }, noise)
    }
}

impl CostFunction for Likelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (kernel, noise) = self.unpack(theta);
        let nll = neg_log_likelihood(&kernel, noise, self.inputs, &self.y);
        Ok(if nll.is_finite() { nll } else { 1e300 })
    }
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the observations.
    pub fn with_hyperparameters(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: Matern52,
        noise_variance: f64,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::validation("observations", "need matching, non-empty inputs and targets"));
        }
        let (y_mean, y_scale, y) = standardize(&targets);
        let (chol, jitter) = factor(&kernel, &inputs, noise_variance)?;
        let alpha = chol.solve(&DVector::from_vec(y));
        Ok(Self { kernel, noise_variance, inputs, targets, jitter, y_mean, y_scale, chol, alpha })
    }

    /// Fits hyperparameters by maximizing the marginal likelihood with
    /// multi-start Nelder–Mead in log space, then conditions on the data.
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() < 2 || inputs.len() != targets.len() {
            return Err(Error::validation("observations", "need at least two (input, target) pairs"));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::validation("observations", "inputs disagree on dimension"));
        }
        let (_, _, y) = standardize(&targets);
        let problem = Likelihood { inputs: &inputs, y: DVector::from_vec(y), dim };

        let mut rng = ChaCha8Rng::seed_from_u64(inputs.len() as u64);
        let mut starts = vec![{
            let mut s = vec![0.3f64.ln(); dim];
            s.push(0.0);
            s.push(1e-4f64.ln());
            s
        }];
        for _ in 1..FIT_RESTARTS {
            let mut s: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.5..1.0)).collect();
            s.push(rng.gen_range(-1.0..1.0));
            s.push(rng.gen_range(-11.0..-4.0));
            starts.push(s);
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let simplex: Vec<Vec<f64>> = std::iter::once(start.clone())
                .chain((0..start.len()).map(|i| {
                    let mut v = start.clone();
                    v[i] += 0.7;
                    v
                }))
                .collect();
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-6)
                .map_err(|e| Error::Config(e.to_string()))?;
            let local = Likelihood { inputs: &inputs, y: problem.y.clone(), dim };
            let res = Executor::new(local, solver)
                .configure(|s| s.max_iters(150))
                .run();
            if let Ok(res) = res {
                let state = res.state();
                if let Some(theta) = state.best_param.clone() {
                    let cost = state.best_cost;
                    if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                        best = Some((cost, theta));
                    }
                }
            }
        }
        let theta = best
            .map(|(_, t)| t)
            .ok_or(Error::SingularKernel { jitter: MAX_JITTER })?;
        let (kernel, noise) = problem.unpack(&theta);
        Self::with_hyperparameters(inputs, targets, kernel, noise)
    }

    /// Posterior mean and latent variance at `x`, in target units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.eval(x, xi)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("factor is non-singular");
        let var = (self.kernel.signal_variance - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }

    /// Extra diagonal added to make the kernel matrix factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior variance of the latent function in target units.
    pub fn prior_variance(&self) -> f64 {
        self.kernel.signal_variance * self.y_scale * self.y_scale
    }
}
