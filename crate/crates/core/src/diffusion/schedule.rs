use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Parameters a [`NoiseSchedule`] is built from; stored in configs and checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub kind: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { steps: 200, kind: ScheduleKind::Linear, beta_start: 5e-4, beta_end: 0.1 }
    }
}

impl ScheduleSpec {
    /// Full-length schedule: 1000 steps, beta 1e-4 to 0.02. The default is a
    /// 200-step schedule with comparable end-point corruption, for CPU training.
    pub fn reference() -> Self {
        Self { steps: 1000, kind: ScheduleKind::Linear, beta_start: 1e-4, beta_end: 0.02 }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.kind, self.beta_start, self.beta_end)
    }
}

/// Variance schedule with cumulative signal retention `gamma_bar[t] = prod_{s<=t} (1 - beta[s])`.
///
/// Steps are 1-based: `beta(1)` is the first increment, `gamma_bar(0)` is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    gamma_bars: Vec<f64>,
}

pub fn build_schedule(steps: usize, kind: ScheduleKind, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::param("beta", format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear if steps == 1 => vec![beta_start],
        ScheduleKind::Linear => (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect(),
    };
    let mut gamma_bars = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for b in &betas {
        acc *= 1.0 - b;
        gamma_bars.push(acc);
    }
    Ok(NoiseSchedule { spec: ScheduleSpec { steps, kind, beta_start, beta_end }, betas, gamma_bars })
}

impl NoiseSchedule {
    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Step { t, steps: self.steps() });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `gamma_bar(0) = 1` by convention.
    pub fn gamma_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.gamma_bars[t - 1]
        }
    }

    pub fn gamma_bars(&self) -> &[f64] {
        &self.gamma_bars
    }

    /// Variance of the ancestral reverse step `t -> t-1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.gamma_bar(t - 1)) / (1.0 - self.gamma_bar(t))
    }

    /// Uniform step in `1..=T`.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(1..=self.steps())
    }
}

/// Closed-form marginal `y_t = sqrt(gb) * y0 + sqrt(1 - gb) * eps` for a given `gb`.
pub fn noise_with_gamma<F: Scalar>(y0: &Tensor<F>, gamma_bar: f64, epsilon: &Tensor<F>) -> Tensor<F> {
    let a = F::lit(gamma_bar.sqrt());
    let b = F::lit((1.0 - gamma_bar).max(0.0).sqrt());
    y0.zip_map(epsilon, |y, e| a * y + b * e)
}

/// Corrupts `y0` to diffusion step `t` (1-based) with the supplied noise.
pub fn forward_noise<F: Scalar>(
    y0: &Tensor<F>,
    t: usize,
    schedule: &NoiseSchedule,
    epsilon: &Tensor<F>,
) -> Result<Tensor<F>> {
    schedule.check(t)?;
    if y0.shape() != epsilon.shape() {
        return Err(Error::Shape(format!("y0 {:?} vs epsilon {:?}", y0.shape(), epsilon.shape())));
    }
    Ok(noise_with_gamma(y0, schedule.gamma_bar(t), epsilon))
}

/// One Markov step `y_t = sqrt(1 - beta_t) y_{t-1} + sqrt(beta_t) eps`.
pub fn forward_step<F: Scalar>(prev: &Tensor<F>, t: usize, schedule: &NoiseSchedule, epsilon: &Tensor<F>) -> Result<Tensor<F>> {
    schedule.check(t)?;
    let beta = schedule.beta(t);
    let a = F::lit((1.0 - beta).sqrt());
    let b = F::lit(beta.sqrt());
    Ok(prev.zip_map(epsilon, |y, e| a * y + b * e))
}
