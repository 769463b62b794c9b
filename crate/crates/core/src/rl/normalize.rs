/// Per-component running mean and variance used to standardize observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

/// Standardized components are clipped to this magnitude.
pub const NORM_CLIP: f64 = 10.0;
const NORM_EPS: f64 = 1e-8;

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 1e-4 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds in one sample (parallel-variance merge with a batch of one).
    pub fn update(&mut self, x: &[f64]) {
        let total = self.count + 1.0;
        for ((m, v), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            let delta = xi - *m;
            let new_mean = *m + delta / total;
            let m2 = *v * self.count + delta * delta * self.count / total;
            *m = new_mean;
            *v = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&xi, (m, v))| ((xi - m) / (v + NORM_EPS).sqrt()).clamp(-NORM_CLIP, NORM_CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_sample_moments() {
        let xs: Vec<[f64; 2]> = (0..500).map(|i| [i as f64 * 0.1, (i as f64).sin() * 3.0 + 1.0]).collect();
        let mut rms = RunningMeanStd::new(2);
        for x in &xs {
            rms.update(x);
        }
        for d in 0..2 {
            let n = xs.len() as f64;
            let mean = xs.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((rms.mean[d] - mean).abs() < 1e-6 * (1.0 + mean.abs()));
            assert!((rms.var[d] - var).abs() < 1e-5 * var);
        }
    }

    #[test]
    fn clips_outliers() {
        let mut rms = RunningMeanStd::new(1);
        for _ in 0..100 {
            rms.update(&[1.0]);
        }
        assert_eq!(rms.normalize(&[1e9])[0], NORM_CLIP);
    }
}
