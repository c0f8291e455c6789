//! Experiment configuration: one TOML file drives every subcommand.
//!
//! Every section and every key is optional; anything left out takes the
//! library default. Unknown keys are errors. See `docs/config.md`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize};
use tactile_diffusion::conditioning::ForceEncoding;
use tactile_diffusion::dataset::SensorType;
use tactile_diffusion::diffusion::{AdamConfig, Architecture, SampleOptions, ScheduleSpec, TrainConfig, UNetConfig};
use tactile_diffusion::metrics::{DetectParams, FlowStyle};
use tactile_diffusion::rigsim::{default_shapes, RenderConfig, ShapeSpec, TrajectoryConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub conditioning: ForceEncoding,
    pub schedule: ScheduleSpec,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub metrics: MetricsSection,
    pub rigsim: RigsimSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Manifest to train on; relative paths resolve against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Fraction of records used for training.
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { dataset: None, split_ratio: 0.8, split_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Seed of the weight initialization.
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { architecture: Architecture::Unet(UNetConfig::default()), init_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Total optimizer steps; a resumed run stops at the same count.
    pub steps: u64,
    pub batch_size: usize,
    /// Seed of the per-step noise and batch draws.
    pub seed: u64,
    /// Steps between checkpoint writes.
    pub checkpoint_every: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { steps: 20_000, batch_size: t.batch_size, seed: t.seed, checkpoint_every: 500, optimizer: t.optimizer }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { batch_size: self.batch_size, seed: self.seed, optimizer: self.optimizer }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub seed: u64,
    #[serde(flatten)]
    pub options: SampleOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Detect markers and report displacement error and flow overlays.
    pub markers: bool,
    /// (rows, cols) of the marker block to evaluate.
    pub grid: [usize; 2],
    /// Side fraction of the centred region searched for markers.
    pub roi_fraction: f64,
    /// Match markers by minimum total distance instead of grid index.
    pub assignment: bool,
    pub detect: DetectParams,
    pub flow: FlowStyle,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            markers: false,
            grid: [7, 7],
            roi_fraction: 1.0,
            assignment: false,
            detect: DetectParams::default(),
            flow: FlowStyle::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigsimSection {
    pub shapes: Vec<ShapeSpec>,
    pub trajectory: TrajectoryConfig,
    #[serde(deserialize_with = "render_with_sensor_defaults")]
    pub render: RenderConfig,
}

impl Default for RigsimSection {
    fn default() -> Self {
        Self { shapes: default_shapes(), trajectory: TrajectoryConfig::default(), render: RenderConfig::default() }
    }
}

/// Starts from the defaults for the given `sensor_type` and `image_size`,
/// then overlays the keys present; nested tables merge one level deep.
fn render_with_sensor_defaults<'de, D: Deserializer<'de>>(d: D) -> Result<RenderConfig, D::Error> {
    use serde::de::Error;
    let user = toml::Table::deserialize(d)?;
    let sensor: SensorType = match user.get("sensor_type") {
        Some(v) => v.clone().try_into().map_err(D::Error::custom)?,
        None => RenderConfig::default().sensor_type,
    };
    let [h, w]: [usize; 2] = match user.get("image_size") {
        Some(v) => v.clone().try_into().map_err(D::Error::custom)?,
        None => RenderConfig::default().image_size,
    };
    let mut merged = toml::Table::try_from(RenderConfig::for_sensor(sensor, (h, w))).map_err(D::Error::custom)?;
    for (k, v) in user {
        match (merged.get_mut(&k), v) {
            (Some(toml::Value::Table(base)), toml::Value::Table(over)) => base.extend(over),
            (_, v) => {
                merged.insert(k, v);
            }
        }
    }
    RenderConfig::deserialize(merged).map_err(D::Error::custom)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    /// A relative `data.dataset` is made relative to the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(ds) = &cfg.data.dataset {
            if ds.is_relative() {
                cfg.data.dataset = Some(path.parent().unwrap_or(Path::new("")).join(ds));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.data.split_ratio;
        if !(r > 0.0 && r < 1.0) {
            bail!("data.split_ratio must lie in (0, 1), got {r}");
        }
        self.conditioning.ranges.validate().context("conditioning.ranges")?;
        self.schedule.build().context("schedule")?;
        self.train.optimizer.validate().context("train.optimizer")?;
        if self.train.batch_size == 0 {
            bail!("train.batch_size must be positive");
        }
        if self.train.checkpoint_every == 0 {
            bail!("train.checkpoint_every must be positive");
        }
        if self.metrics.grid.contains(&0) {
            bail!("metrics.grid must be positive, got {:?}", self.metrics.grid);
        }
        let f = self.metrics.roi_fraction;
        if !(f > 0.0 && f <= 1.0) {
            bail!("metrics.roi_fraction must lie in (0, 1], got {f}");
        }
        Ok(())
    }
}
