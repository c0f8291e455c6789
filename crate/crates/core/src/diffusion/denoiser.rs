//! The trainable noise predictor interface and a two-layer toy model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::nn::{silu_backward, silu_tensor, Conv2d, ConvCache, Layout};
use crate::diffusion::unet::UNetConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Condition channels: normalized RGB object image plus the force plane.
pub const COND_CHANNELS: usize = 4;
/// Tactile image channels.
pub const IMAGE_CHANNELS: usize = 3;

/// Serializable description of a denoiser's shape, stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Unet(UNetConfig),
    Toy { hidden: usize },
}

/// Predicts the injected noise from `(condition, noisy image, gamma_bar)`.
///
/// `forward` keeps whatever `backward` needs; `backward` adds `dL/dtheta`
/// into `grads` given `dL/d(output)`.
pub trait Denoiser<F: Scalar>: Send + Sync {
    type Cache: Send;

    fn architecture(&self) -> Architecture;
    fn params(&self) -> &[F];
    fn params_mut(&mut self) -> &mut [F];

    /// Rejects spatial sizes the model cannot process.
    fn check_input(&self, _height: usize, _width: usize) -> Result<()> {
        Ok(())
    }

    fn forward(&self, cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> (Tensor<F>, Self::Cache);

    fn backward(&self, cache: Self::Cache, grad_out: &Tensor<F>, grads: &mut [F]);

    fn predict(&self, cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> Tensor<F> {
        self.forward(cond, noisy, gamma_bar).0
    }

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

pub(crate) fn check_io_shapes<F: Scalar>(cond: &Tensor<F>, noisy: &Tensor<F>) -> Result<()> {
    if cond.channels() != COND_CHANNELS || noisy.channels() != IMAGE_CHANNELS {
        return Err(Error::Shape(format!(
            "denoiser expects {COND_CHANNELS}-channel condition and {IMAGE_CHANNELS}-channel image, got {} and {}",
            cond.channels(),
            noisy.channels()
        )));
    }
    if (cond.height(), cond.width()) != (noisy.height(), noisy.width()) {
        return Err(Error::Shape(format!(
            "condition {}x{} vs image {}x{}",
            cond.height(),
            cond.width(),
            noisy.height(),
            noisy.width()
        )));
    }
    Ok(())
}

/// Per-pixel two-layer network: 1x1 conv, SiLU, 1x1 conv.
///
/// The noise level enters as an extra constant input plane holding
/// `sqrt(1 - gamma_bar)`.
#[derive(Clone, Debug)]
pub struct ToyDenoiser<F> {
    hidden: usize,
    first: Conv2d,
    second: Conv2d,
    params: Vec<F>,
}

pub struct ToyCache<F> {
    first: ConvCache<F>,
    pre: Tensor<F>,
    second: ConvCache<F>,
}

impl<F: Scalar> ToyDenoiser<F> {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut layout = Layout::default();
        let first = Conv2d::new(&mut layout, COND_CHANNELS + IMAGE_CHANNELS + 1, hidden, 1);
        let second = Conv2d::new(&mut layout, hidden, IMAGE_CHANNELS, 1);
        let mut params = vec![F::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        first.init(&mut params, 1.0, &mut rng);
        second.init(&mut params, 0.5, &mut rng);
        Self { hidden, first, second, params }
    }

    fn input(cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> Tensor<F> {
        let level = Tensor::filled(1, noisy.height(), noisy.width(), F::lit((1.0 - gamma_bar).max(0.0).sqrt()));
        Tensor::concat(&[cond, noisy, &level])
    }
}

impl<F: Scalar> Denoiser<F> for ToyDenoiser<F> {
    type Cache = ToyCache<F>;

    fn architecture(&self) -> Architecture {
        Architecture::Toy { hidden: self.hidden }
    }

    fn params(&self) -> &[F] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn forward(&self, cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> (Tensor<F>, Self::Cache) {
        let x = Self::input(cond, noisy, gamma_bar);
        let (pre, first) = self.first.forward(&self.params, &x);
        let act = silu_tensor(&pre);
        let (out, second) = self.second.forward(&self.params, &act);
        (out, ToyCache { first, pre, second })
    }

    fn backward(&self, cache: Self::Cache, grad_out: &Tensor<F>, grads: &mut [F]) {
        let d_act = self.second.backward(&self.params, grads, &cache.second, grad_out);
        let d_pre = silu_backward(&cache.pre, &d_act);
        self.first.backward(&self.params, grads, &cache.first, &d_pre);
    }
}

/// Returns exactly a stored noise tensor; the zero-loss reference for the objective.
pub struct OracleDenoiser<F> {
    pub epsilon: Tensor<F>,
}

impl<F: Scalar> Denoiser<F> for OracleDenoiser<F> {
    type Cache = ();

    fn architecture(&self) -> Architecture {
        Architecture::Toy { hidden: 0 }
    }

    fn params(&self) -> &[F] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [F] {
        &mut []
    }

    fn forward(&self, _cond: &Tensor<F>, _noisy: &Tensor<F>, _gamma_bar: f64) -> (Tensor<F>, ()) {
        (self.epsilon.clone(), ())
    }

    fn backward(&self, _cache: (), _grad_out: &Tensor<F>, _grads: &mut [F]) {}
}

/// Always predicts zero noise.
pub struct ZeroDenoiser;

impl<F: Scalar> Denoiser<F> for ZeroDenoiser {
    type Cache = ();

    fn architecture(&self) -> Architecture {
        Architecture::Toy { hidden: 0 }
    }

    fn params(&self) -> &[F] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [F] {
        &mut []
    }

    fn forward(&self, _cond: &Tensor<F>, noisy: &Tensor<F>, _gamma_bar: f64) -> (Tensor<F>, ()) {
        (Tensor::zeros(noisy.channels(), noisy.height(), noisy.width()), ())
    }

    fn backward(&self, _cache: (), _grad_out: &Tensor<F>, _grads: &mut [F]) {}
}
