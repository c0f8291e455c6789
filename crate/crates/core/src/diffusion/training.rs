//! Noise-regression objective and the optimizer step around it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionTensor;
use crate::diffusion::denoiser::{check_io_shapes, Denoiser};
use crate::diffusion::optim::{Adam, AdamConfig};
use crate::diffusion::schedule::{forward_noise, NoiseSchedule};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Loss above which a step counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Mean over all elements of `(epsilon - f(x, y_t, gamma_bar_t))^2`.
pub fn training_loss<F: Scalar, D: Denoiser<F>>(
    denoiser: &D,
    x: &ConditionTensor<F>,
    y0: &Tensor<F>,
    t: usize,
    epsilon: &Tensor<F>,
    schedule: &NoiseSchedule,
) -> Result<F> {
    check_io_shapes(x.tensor(), y0)?;
    let y_t = forward_noise(y0, t, schedule, epsilon)?;
    let pred = denoiser.predict(x.tensor(), &y_t, schedule.gamma_bar(t));
    if !pred.all_finite() {
        return Err(Error::Numerical { step: 0, t, message: "denoiser output is not finite".into() });
    }
    Ok(epsilon.mean_squared_diff(&pred))
}

/// Same loss, adding `dL/dtheta` into `grads`.
pub fn training_loss_and_grad<F: Scalar, D: Denoiser<F>>(
    denoiser: &D,
    x: &ConditionTensor<F>,
    y0: &Tensor<F>,
    t: usize,
    epsilon: &Tensor<F>,
    schedule: &NoiseSchedule,
    grads: &mut [F],
) -> Result<F> {
    check_io_shapes(x.tensor(), y0)?;
    let y_t = forward_noise(y0, t, schedule, epsilon)?;
    let (pred, cache) = denoiser.forward(x.tensor(), &y_t, schedule.gamma_bar(t));
    if !pred.all_finite() {
        return Err(Error::Numerical { step: 0, t, message: "denoiser output is not finite".into() });
    }
    let scale = F::lit(-2.0 / pred.len() as f64);
    let d_out = epsilon.zip_map(&pred, |e, p| scale * (e - p));
    denoiser.backward(cache, &d_out, grads);
    Ok(epsilon.mean_squared_diff(&pred))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 4, seed: 0, optimizer: AdamConfig::default() }
    }
}

/// Denoiser plus everything needed to continue training bit-identically.
#[derive(Clone, Debug)]
pub struct TrainState<F, D> {
    pub denoiser: D,
    pub optimizer: Adam<F>,
    pub schedule: NoiseSchedule,
    /// Completed steps.
    pub step: u64,
    /// Seed of the per-step random streams.
    pub seed: u64,
    /// Exponential moving average of the batch loss (decay 0.98).
    pub loss_ema: f64,
    pub last_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub loss_ema: f64,
}

/// A training example: condition tensor and clean target in the model domain.
pub type Example<F> = (ConditionTensor<F>, Tensor<F>);

impl<F: Scalar, D: Denoiser<F>> TrainState<F, D> {
    pub fn new(denoiser: D, schedule: NoiseSchedule, optimizer: AdamConfig, seed: u64) -> Self {
        let n = denoiser.num_params();
        Self {
            denoiser,
            optimizer: Adam::new(optimizer, n),
            schedule,
            step: 0,
            seed,
            loss_ema: f64::NAN,
            last_loss: f64::NAN,
        }
    }

    /// Random stream for step `step`; independent of how training was chunked.
    pub fn step_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        rng
    }

    /// One optimizer step on the batch mean of the noise-regression loss.
    ///
    /// On divergence the parameters are left untouched.
    pub fn train_step(&mut self, batch: &[&Example<F>]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Precondition("train_step needs a non-empty batch".into()));
        }
        let (_, h, w) = batch[0].1.shape();
        self.denoiser.check_input(h, w)?;
        let mut rng = self.step_rng(self.step);
        let draws: Vec<(usize, Tensor<F>)> = batch
            .iter()
            .map(|(_, y0)| {
                let t = self.schedule.sample_step(&mut rng);
                let (c, h, w) = y0.shape();
                (t, Tensor::randn(c, h, w, &mut rng))
            })
            .collect();

        let n = self.denoiser.num_params();
        let denoiser = &self.denoiser;
        let schedule = &self.schedule;
        let results: Vec<Result<(F, Vec<F>)>> = batch
            .par_iter()
            .zip(draws.par_iter())
            .map(|((x, y0), (t, eps))| {
                let mut g = vec![F::zero(); n];
                let loss = training_loss_and_grad(denoiser, x, y0, *t, eps, schedule, &mut g)
                    .map_err(|e| match e {
                        Error::Numerical { t, message, .. } => Error::Numerical { step: self.step, t, message },
                        other => other,
                    })?;
                Ok((loss, g))
            })
            .collect();

        let inv = F::lit(1.0 / batch.len() as f64);
        let mut grads = vec![F::zero(); n];
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l.to_f64_lossy();
            for (a, b) in grads.iter_mut().zip(g) {
                *a += b * inv;
            }
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step: self.step, loss });
        }

        self.optimizer.update(self.denoiser.params_mut(), &mut grads);
        self.step += 1;
        self.last_loss = loss;
        self.loss_ema = if self.loss_ema.is_nan() { loss } else { 0.98 * self.loss_ema + 0.02 * loss };
        Ok(StepReport { step: self.step, loss, loss_ema: self.loss_ema })
    }

    /// Batch of indices into a dataset of `n` examples for the current step,
    /// drawn from a stream separate from the noise draws.
    pub fn batch_indices(&self, n: usize, batch_size: usize) -> Vec<usize> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(self.step);
        (0..batch_size).map(|_| rng.random_range(0..n)).collect()
    }

    /// Runs `steps` more steps, drawing batches uniformly from `data`.
    pub fn fit(&mut self, data: &[Example<F>], batch_size: usize, steps: u64, mut on_step: impl FnMut(&StepReport)) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for _ in 0..steps {
            let idx = self.batch_indices(data.len(), batch_size.max(1));
            let batch: Vec<&Example<F>> = idx.iter().map(|&i| &data[i]).collect();
            let report = self.train_step(&batch)?;
            on_step(&report);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::{OracleDenoiser, ToyDenoiser, ZeroDenoiser};
    use crate::diffusion::schedule::{build_schedule, ScheduleKind};

    fn example(seed: u64, h: usize, w: usize) -> Example<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ConditionTensor(Tensor::<f64>::randn(4, h, w, &mut rng).map(|v| v.tanh()));
        let y0 = Tensor::<f64>::randn(3, h, w, &mut rng).map(|v| v.tanh());
        (x, y0)
    }

    #[test]
    fn oracle_denoiser_has_zero_loss() {
        let s = build_schedule(50, ScheduleKind::Linear, 1e-3, 0.05).unwrap();
        let (x, y0) = example(1, 4, 4);
        let eps = Tensor::randn(3, 4, 4, &mut ChaCha8Rng::seed_from_u64(9));
        let oracle = OracleDenoiser { epsilon: eps.clone() };
        assert_eq!(training_loss(&oracle, &x, &y0, 17, &eps, &s).unwrap(), 0.0);
    }

    #[test]
    fn zero_denoiser_loss_is_mean_square_noise() {
        let s = build_schedule(50, ScheduleKind::Linear, 1e-3, 0.05).unwrap();
        let (x, y0) = example(2, 48, 48);
        let mut total = 0.0;
        for seed in 0..5 {
            let eps = Tensor::randn(3, 48, 48, &mut ChaCha8Rng::seed_from_u64(seed));
            let loss = training_loss(&ZeroDenoiser, &x, &y0, 5, &eps, &s).unwrap();
            let direct: f64 = eps.data().iter().map(|v| v * v).sum::<f64>() / eps.len() as f64;
            assert!((loss - direct).abs() < 1e-12);
            total += loss;
        }
        let mean = total / 5.0;
        assert!((mean - 1.0).abs() < 0.03, "mean loss {mean}");
    }

    #[test]
    fn empty_batch_is_a_precondition_error() {
        let s = build_schedule(10, ScheduleKind::Linear, 1e-3, 0.05).unwrap();
        let mut st = TrainState::new(ToyDenoiser::<f64>::new(4, 0), s, AdamConfig::default(), 0);
        assert!(matches!(st.train_step(&[]), Err(Error::Precondition(_))));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn step_is_reproducible_and_chunking_invariant() {
        let s = build_schedule(20, ScheduleKind::Linear, 1e-3, 0.1).unwrap();
        let data: Vec<Example<f64>> = (0..3).map(|i| example(i, 4, 4)).collect();
        let run = |chunks: &[u64]| {
            let mut st = TrainState::new(ToyDenoiser::<f64>::new(8, 1), s.clone(), AdamConfig::default(), 5);
            let mut losses = Vec::new();
            for &c in chunks {
                st.fit(&data, 2, c, |r| losses.push(r.loss)).unwrap();
            }
            (losses, st.denoiser.params().to_vec())
        };
        let (a, pa) = run(&[10]);
        let (b, pb) = run(&[4, 6]);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }
}
