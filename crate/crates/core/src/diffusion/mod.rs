//! Conditional denoising diffusion in pixel space.

pub mod checkpoint;
pub mod denoiser;
pub mod model;
pub mod nn;
pub mod optim;
pub mod sampling;
pub mod schedule;
pub mod training;
pub mod unet;

pub use checkpoint::{Checkpoint, CheckpointMeta, Generator, ModelContext};
pub use denoiser::{Architecture, Denoiser, OracleDenoiser, ToyDenoiser, ZeroDenoiser};
pub use model::AnyDenoiser;
pub use optim::{Adam, AdamConfig};
pub use sampling::{sample, SampleOptions};
pub use schedule::{build_schedule, forward_noise, forward_step, NoiseSchedule, ScheduleKind, ScheduleSpec};
pub use training::{training_loss, training_loss_and_grad, Example, StepReport, TrainConfig, TrainState};
pub use unet::{UNet, UNetConfig};
