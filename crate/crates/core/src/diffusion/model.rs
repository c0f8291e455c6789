//! Runtime-selected denoiser, built from an [`Architecture`] descriptor.

use crate::diffusion::denoiser::{Architecture, Denoiser, ToyCache, ToyDenoiser};
use crate::diffusion::unet::{UNet, UNetCache};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum AnyDenoiser<F> {
    Unet(UNet<F>),
    Toy(ToyDenoiser<F>),
}

pub enum AnyCache<F> {
    Unet(UNetCache<F>),
    Toy(ToyCache<F>),
}

impl<F: Scalar> AnyDenoiser<F> {
    pub fn build(arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(match arch {
            Architecture::Unet(cfg) => AnyDenoiser::Unet(UNet::new(cfg.clone(), seed)?),
            Architecture::Toy { hidden } => AnyDenoiser::Toy(ToyDenoiser::new(*hidden, seed)),
        })
    }
}

impl<F: Scalar> Denoiser<F> for AnyDenoiser<F> {
    type Cache = AnyCache<F>;

    fn architecture(&self) -> Architecture {
        match self {
            AnyDenoiser::Unet(m) => m.architecture(),
            AnyDenoiser::Toy(m) => m.architecture(),
        }
    }

    fn params(&self) -> &[F] {
        match self {
            AnyDenoiser::Unet(m) => m.params(),
            AnyDenoiser::Toy(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [F] {
        match self {
            AnyDenoiser::Unet(m) => m.params_mut(),
            AnyDenoiser::Toy(m) => m.params_mut(),
        }
    }

    fn check_input(&self, height: usize, width: usize) -> Result<()> {
        match self {
            AnyDenoiser::Unet(m) => m.check_input(height, width),
            AnyDenoiser::Toy(m) => m.check_input(height, width),
        }
    }

    fn forward(&self, cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> (Tensor<F>, Self::Cache) {
        match self {
            AnyDenoiser::Unet(m) => {
                let (y, c) = m.forward(cond, noisy, gamma_bar);
                (y, AnyCache::Unet(c))
            }
            AnyDenoiser::Toy(m) => {
                let (y, c) = m.forward(cond, noisy, gamma_bar);
                (y, AnyCache::Toy(c))
            }
        }
    }

    fn backward(&self, cache: Self::Cache, grad_out: &Tensor<F>, grads: &mut [F]) {
        match (self, cache) {
            (AnyDenoiser::Unet(m), AnyCache::Unet(c)) => m.backward(c, grad_out, grads),
            (AnyDenoiser::Toy(m), AnyCache::Toy(c)) => m.backward(c, grad_out, grads),
            _ => unreachable!("cache produced by a different denoiser variant"),
        }
    }
}
