//! Checkpoint files and the generator built from them.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "TACDIFF\0"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (CheckpointMeta)
//! n_params     u64
//! params       n_params values of the dtype named in the header
//! n_moments    u64       0 or n_params
//! adam_step    u64       optimizer steps taken
//! adam_m       n_moments values
//! adam_v       n_moments values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{assemble_condition, ForceEncoding};
use crate::dataset::{ForceVector, SensorType};
use crate::diffusion::denoiser::{Architecture, Denoiser};
use crate::diffusion::model::AnyDenoiser;
use crate::diffusion::optim::Adam;
use crate::diffusion::sampling::{sample, SampleOptions};
use crate::diffusion::schedule::{NoiseSchedule, ScheduleSpec};
use crate::diffusion::training::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::image::{denormalize, Image};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TACDIFF\0";

/// Compatibility and provenance metadata stored with the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub dtype: String,
    pub architecture: Architecture,
    pub init_seed: u64,
    pub schedule: ScheduleSpec,
    pub encoding: ForceEncoding,
    /// (height, width)
    pub image_size: [usize; 2],
    pub sensor_type: SensorType,
    pub train: TrainConfig,
    pub sample: SampleOptions,
    pub step: u64,
    pub loss_ema: Option<f64>,
    pub last_loss: Option<f64>,
    /// Experiment config text the model was trained from.
    pub experiment_config: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub meta: CheckpointMeta,
    pub params: Vec<F>,
    pub adam_step: u64,
    pub adam_m: Vec<F>,
    pub adam_v: Vec<F>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Fields of [`CheckpointMeta`] that a training state does not carry.
#[derive(Clone, Debug)]
pub struct ModelContext {
    pub init_seed: u64,
    pub encoding: ForceEncoding,
    pub image_size: (usize, usize),
    pub sensor_type: SensorType,
    pub train: TrainConfig,
    pub sample: SampleOptions,
    pub experiment_config: Option<String>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn from_state(state: &TrainState<F, AnyDenoiser<F>>, ctx: &ModelContext) -> Self {
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dtype: F::DTYPE.to_string(),
            architecture: state.denoiser.architecture(),
            init_seed: ctx.init_seed,
            schedule: *state.schedule.spec(),
            encoding: ctx.encoding,
            image_size: [ctx.image_size.0, ctx.image_size.1],
            sensor_type: ctx.sensor_type,
            train: TrainConfig { seed: state.seed, optimizer: state.optimizer.config, ..ctx.train },
            sample: ctx.sample,
            step: state.step,
            loss_ema: finite(state.loss_ema),
            last_loss: finite(state.last_loss),
            experiment_config: ctx.experiment_config.clone(),
        };
        Self {
            meta,
            params: state.denoiser.params().to_vec(),
            adam_step: state.optimizer.step,
            adam_m: state.optimizer.m.clone(),
            adam_v: state.optimizer.v.clone(),
        }
    }

    pub fn context(&self) -> ModelContext {
        ModelContext {
            init_seed: self.meta.init_seed,
            encoding: self.meta.encoding,
            image_size: (self.meta.image_size[0], self.meta.image_size[1]),
            sensor_type: self.meta.sensor_type,
            train: self.meta.train,
            sample: self.meta.sample,
            experiment_config: self.meta.experiment_config.clone(),
        }
    }

    pub fn denoiser(&self) -> Result<AnyDenoiser<F>> {
        let mut d = AnyDenoiser::build(&self.meta.architecture, self.meta.init_seed)?;
        if d.num_params() != self.params.len() {
            return Err(Error::Compatibility(format!(
                "architecture has {} parameters, checkpoint stores {}",
                d.num_params(),
                self.params.len()
            )));
        }
        d.params_mut().copy_from_slice(&self.params);
        Ok(d)
    }

    /// Restores the full training state, optimizer moments included.
    pub fn to_state(&self) -> Result<TrainState<F, AnyDenoiser<F>>> {
        let denoiser = self.denoiser()?;
        let schedule = self.meta.schedule.build()?;
        let mut state = TrainState::new(denoiser, schedule, self.meta.train.optimizer, self.meta.train.seed);
        state.step = self.meta.step;
        state.loss_ema = self.meta.loss_ema.unwrap_or(f64::NAN);
        state.last_loss = self.meta.last_loss.unwrap_or(f64::NAN);
        if !self.adam_m.is_empty() {
            state.optimizer = Adam {
                config: self.meta.train.optimizer,
                step: self.adam_step,
                m: self.adam_m.clone(),
                v: self.adam_v.clone(),
            };
        }
        Ok(state)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Parse { what: "checkpoint header".into(), message: e.to_string() })?;
        let mut out = Vec::with_capacity(32 + header.len() + (self.params.len() * 3) * F::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        self.params.iter().for_each(|v| v.write_le(&mut out));
        out.extend_from_slice(&(self.adam_m.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.adam_step.to_le_bytes());
        self.adam_m.iter().for_each(|v| v.write_le(&mut out));
        self.adam_v.iter().for_each(|v| v.write_le(&mut out));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse { what: "checkpoint".into(), message: "bad magic".into() });
        }
        let hlen = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(hlen)?)
            .map_err(|e| Error::Parse { what: "checkpoint header".into(), message: e.to_string() })?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::FormatVersion { found: meta.format_version, supported: CHECKPOINT_FORMAT_VERSION });
        }
        if meta.dtype != F::DTYPE {
            return Err(Error::Compatibility(format!("checkpoint holds {} weights, requested {}", meta.dtype, F::DTYPE)));
        }
        let n = r.u64()? as usize;
        let params = r.values::<F>(n)?;
        let nm = r.u64()? as usize;
        let adam_step = r.u64()?;
        let adam_m = r.values::<F>(nm)?;
        let adam_v = r.values::<F>(nm)?;
        if r.pos != bytes.len() {
            return Err(Error::Parse { what: "checkpoint".into(), message: "trailing bytes".into() });
        }
        Ok(Self { meta, params, adam_step, adam_m, adam_v })
    }

    /// Writes via a temporary file and rename, so an existing checkpoint at
    /// `path` is only replaced by a complete one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the given sampling-time settings match the training ones.
    pub fn check_compatible(&self, schedule: &ScheduleSpec, encoding: &ForceEncoding) -> Result<()> {
        if &self.meta.schedule != schedule {
            return Err(Error::Compatibility(format!(
                "schedule {:?} differs from the trained schedule {:?}",
                schedule, self.meta.schedule
            )));
        }
        if &self.meta.encoding != encoding {
            return Err(Error::Compatibility("force encoding differs from the trained encoding".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Generator<F>> {
        Ok(Generator {
            denoiser: self.denoiser()?,
            schedule: self.meta.schedule.build()?,
            encoding: self.meta.encoding,
            image_size: (self.meta.image_size[0], self.meta.image_size[1]),
            options: self.meta.sample,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            what: "checkpoint".into(),
            message: "truncated file".into(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn values<F: Scalar>(&mut self, n: usize) -> Result<Vec<F>> {
        let raw = self.take(n.checked_mul(F::BYTES).ok_or_else(|| Error::Parse {
            what: "checkpoint".into(),
            message: "length overflow".into(),
        })?)?;
        Ok(raw.chunks_exact(F::BYTES).map(F::read_le).collect())
    }
}

/// Trained model ready for conditional generation. Immutable; safe to share.
#[derive(Clone, Debug)]
pub struct Generator<F> {
    pub denoiser: AnyDenoiser<F>,
    pub schedule: NoiseSchedule,
    pub encoding: ForceEncoding,
    pub image_size: (usize, usize),
    pub options: SampleOptions,
}

impl<F: Scalar> Generator<F> {
    pub fn generate(&self, object_image: &Image, force: &ForceVector, seed: u64) -> Result<Image> {
        if (object_image.height(), object_image.width()) != self.image_size {
            return Err(Error::Shape(format!(
                "object image is {}x{}, model expects {}x{}",
                object_image.height(),
                object_image.width(),
                self.image_size.0,
                self.image_size.1
            )));
        }
        let x = assemble_condition::<F>(object_image, force, &self.encoding)?;
        let y = sample(&self.denoiser, &x, &self.schedule, seed, self.options)?;
        denormalize(&y)
    }
}
