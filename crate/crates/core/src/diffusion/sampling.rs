//! Ancestral reverse-diffusion sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditionTensor;
use crate::diffusion::denoiser::{Denoiser, IMAGE_CHANNELS};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleOptions {
    /// Clip the implied clean image to `[-1, 1]` before forming each step's mean.
    pub clip_denoised: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { clip_denoised: true }
    }
}

/// Generates a tactile image for condition `x`, starting from seeded noise and
/// taking one reverse step per diffusion step. Output is clamped to `[-1, 1]`.
pub fn sample<F: Scalar, D: Denoiser<F>>(
    denoiser: &D,
    x: &ConditionTensor<F>,
    schedule: &NoiseSchedule,
    seed: u64,
    options: SampleOptions,
) -> Result<Tensor<F>> {
    let (c, h, w) = x.tensor().shape();
    if c != ConditionTensor::<F>::CHANNELS {
        return Err(Error::Shape(format!("condition has {c} channels, expected 4")));
    }
    denoiser.check_input(h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Tensor::<F>::randn(IMAGE_CHANNELS, h, w, &mut rng);
    for t in (1..=schedule.steps()).rev() {
        let gb = schedule.gamma_bar(t);
        let gb_prev = schedule.gamma_bar(t - 1);
        let beta = schedule.beta(t);
        let eps = denoiser.predict(x.tensor(), &y, gb);
        if !eps.all_finite() {
            return Err(Error::Numerical { step: 0, t, message: "denoiser output is not finite during sampling".into() });
        }
        let mut mean = if options.clip_denoised {
            // posterior mean through the clipped clean-image estimate
            let (sa, sb) = (F::lit(gb.sqrt()), F::lit((1.0 - gb).sqrt()));
            let x0 = y.zip_map(&eps, |yv, e| ((yv - sb * e) / sa).max(-F::one()).min(F::one()));
            let c0 = F::lit(gb_prev.sqrt() * beta / (1.0 - gb));
            let ct = F::lit((1.0 - beta).sqrt() * (1.0 - gb_prev) / (1.0 - gb));
            x0.zip_map(&y, |a, b| c0 * a + ct * b)
        } else {
            let k = F::lit(beta / (1.0 - gb).sqrt());
            let inv = F::lit(1.0 / (1.0 - beta).sqrt());
            y.zip_map(&eps, |yv, e| (yv - k * e) * inv)
        };
        if t > 1 {
            let sigma = F::lit(schedule.posterior_variance(t).max(0.0).sqrt());
            let z = Tensor::<F>::randn(IMAGE_CHANNELS, h, w, &mut rng);
            for (m, zv) in mean.data_mut().iter_mut().zip(z.data()) {
                *m += sigma * *zv;
            }
        }
        y = mean;
    }
    Ok(y.clamp(-F::one(), F::one()))
}
