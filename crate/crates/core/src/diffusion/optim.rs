use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, grad_clip: 1.0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::param("beta1/beta2", "must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::param("epsilon/grad_clip", "epsilon > 0 and grad_clip >= 0 required"));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, step: 0, m: vec![F::zero(); num_params], v: vec![F::zero(); num_params] }
    }

    /// Applies one update in place; `grads` may be rescaled by clipping.
    pub fn update(&mut self, params: &mut [F], grads: &mut [F]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if self.config.grad_clip > 0.0 {
            let norm = grads.iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
            if norm > self.config.grad_clip {
                let s = F::lit(self.config.grad_clip / norm);
                grads.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = F::lit(c.learning_rate * bc2.sqrt() / bc1);
        let eps = F::lit(c.epsilon * bc2.sqrt());
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            *p -= lr * *m / (v.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = vec![3.0f64, -2.0];
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, grad_clip: 0.0, ..Default::default() }, 2);
        for _ in 0..2000 {
            let mut g = vec![2.0 * x[0], 8.0 * x[1]];
            opt.update(&mut x, &mut g);
        }
        assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut x = vec![1.0f64];
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.1, grad_clip: 0.0, ..Default::default() }, 1);
        opt.update(&mut x, &mut [5.0]);
        assert!((x[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_the_gradient_norm() {
        let mut x = vec![0.0f32; 2];
        let mut g = vec![30.0f32, 40.0];
        let mut opt = Adam::new(AdamConfig { grad_clip: 1.0, ..Default::default() }, 2);
        opt.update(&mut x, &mut g);
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }
}
