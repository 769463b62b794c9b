//! Fully connected networks with hand-written backpropagation.
//!
//! Batches are stored column-wise: an input batch is `in × B`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `out × in` per layer.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Mlp {
    /// Gaussian fan-in initialization; the output layer is additionally
    /// scaled by `output_scale`. Biases start at zero.
    pub fn new<R: Rng>(dims: &[usize], output_scale: f64, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let mut std = (2.0 / fan_in as f64).sqrt();
            if l + 1 == layers {
                std = output_scale / (fan_in as f64).sqrt();
            }
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| std * rng.sample::<f64, _>(StandardNormal)));
            biases.push(DVector::zeros(fan_out));
        }
        Self { weights, biases }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            weights: dims.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: dims[1..].iter().map(|&n| DVector::zeros(n)).collect(),
        }
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].ncols()];
        dims.extend(self.weights.iter().map(|w| w.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.nrows())
    }

    /// Returns the output and every layer input (the batch itself followed by
    /// each post-ReLU hidden activation), which [`Mlp::backward`] needs.
    pub fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let mut acts = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &h;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(std::mem::replace(&mut h, z));
        }
        (h, acts)
    }

    /// Accumulates into `grad` the parameter gradient of a scalar whose
    /// gradient with respect to the output batch is `d_out`.
    pub fn backward(&self, acts: &[DMatrix<f64>], d_out: &DMatrix<f64>, grad: &mut Mlp) {
        let mut delta = d_out.clone();
        for l in (0..self.weights.len()).rev() {
            grad.weights[l] += &delta * acts[l].transpose();
            grad.biases[l] += delta.column_sum();
            if l == 0 {
                break;
            }
            let mut prev = self.weights[l].transpose() * &delta;
            prev.zip_apply(&acts[l], |d, a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = prev;
        }
    }

    fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }
}

/// Gaussian policy: a mean network, a separate value network, and one
/// state-independent log standard deviation per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub policy: Mlp,
    pub value: Mlp,
    pub log_std: DVector<f64>,
}

impl PolicyNet {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], act_dim: usize, log_std_init: f64, rng: &mut R) -> Self {
        let dims = |out: usize| {
            let mut d = vec![obs_dim];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        let policy = Mlp::new(&dims(act_dim), 0.01, rng);
        let value = Mlp::new(&dims(1), 1.0, rng);
        Self { policy, value, log_std: DVector::from_element(act_dim, log_std_init) }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            policy: Mlp::zeros(&self.policy.dims()),
            value: Mlp::zeros(&self.value.dims()),
            log_std: DVector::zeros(self.log_std.len()),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim()
    }

    /// Action mean and state value for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if obs.len() != self.obs_dim() {
            return Err(Error::validation(
                "observation",
                format!("expected {} components, got {}", self.obs_dim(), obs.len()),
            ));
        }
        let x = DMatrix::from_column_slice(obs.len(), 1, obs);
        let (mean, _) = self.policy.forward(&x);
        let (value, _) = self.value.forward(&x);
        Ok((mean.as_slice().to_vec(), value[(0, 0)]))
    }

    /// Every parameter array in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.policy.tensors().chain(self.value.tensors()).collect();
        out.push(self.log_std.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.policy.tensors_mut().chain(self.value.tensors_mut()).collect();
        out.push(self.log_std.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Norms of the action part (mean network and log standard deviations)
    /// and of the value network.
    pub fn part_norms(&self) -> (f64, f64) {
        let sq = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
        let action = self.policy.tensors().map(sq).sum::<f64>() + sq(self.log_std.as_slice());
        let value = self.value.tensors().map(sq).sum::<f64>();
        (action.sqrt(), value.sqrt())
    }

    /// Rescales the action part and the value network independently so that
    /// neither norm exceeds `max_norm`.
    pub fn clip_part_norms(&mut self, max_norm: f64) {
        let (action, value) = self.part_norms();
        if action > max_norm {
            let f = max_norm / action;
            self.policy.tensors_mut().for_each(|t| t.iter_mut().for_each(|v| *v *= f));
            self.log_std.iter_mut().for_each(|v| *v *= f);
        }
        if value > max_norm {
            let f = max_norm / value;
            self.value.tensors_mut().for_each(|t| t.iter_mut().for_each(|v| *v *= f));
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Adaptive-moment optimizer minimizing a loss.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: i32,
    first: PolicyNet,
    second: PolicyNet,
}

impl Adam {
    pub fn new(net: &PolicyNet, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            first: net.zeros_like(),
            second: net.zeros_like(),
        }
    }

    pub fn step(&mut self, net: &mut PolicyNet, grad: &PolicyNet) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let params = net.tensors_mut();
        let m = self.first.tensors_mut();
        let v = self.second.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grad.tensors()).zip(m).zip(v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}
