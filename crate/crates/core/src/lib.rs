//! Contact-condition guided diffusion for vision-based tactile sensor images.
//!
//! Maps an object image plus a six-axis force reading to a tactile sensor
//! image with a conditional denoising diffusion model, and ships the tools
//! around it: a dataset format, an evaluation suite (image similarity, marker
//! displacement, marker flow) and a synthetic acquisition rig that produces
//! paired training data.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the width used by the command-line tools.

pub mod conditioning;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod rigsim;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Width used for training and generation.
pub type Real = f32;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type UNet32 = diffusion::UNet<f32>;
pub type UNet64 = diffusion::UNet<f64>;
pub type Checkpoint32 = diffusion::Checkpoint<f32>;
pub type Generator32 = diffusion::Generator<f32>;
pub type TrainState32 = diffusion::TrainState<f32, diffusion::AnyDenoiser<f32>>;
