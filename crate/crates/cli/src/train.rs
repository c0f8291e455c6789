use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use tactile_diffusion::conditioning::assemble_condition;
use tactile_diffusion::dataset::{load_dataset, split_dataset, DatasetManifest};
use tactile_diffusion::diffusion::{AnyDenoiser, Checkpoint, Denoiser, Example, ModelContext, StepReport, TrainState};
use tactile_diffusion::image::normalize;
use tactile_diffusion::{Real, TrainState32};

use crate::config::ExperimentConfig;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG: &str = "loss.csv";

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training noise seed; overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory: checkpoint, loss log, split manifests, config copy.
    #[arg(long)]
    out: PathBuf,
    /// Dataset manifest; overrides `data.dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Continue from this checkpoint up to `train.steps`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overrides `train.steps`.
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LossRow {
    step: u64,
    loss: f64,
    loss_ema: f64,
}

/// Copy of `m` whose image paths are absolute, so it can live anywhere.
fn detached(m: &DatasetManifest) -> Result<DatasetManifest> {
    let root = std::fs::canonicalize(&m.root).with_context(|| format!("resolving {}", m.root.display()))?;
    let mut out = m.clone();
    for r in &mut out.records {
        r.object_image = root.join(&r.object_image);
        r.tactile_image = root.join(&r.tactile_image);
    }
    Ok(out)
}

fn examples(m: &DatasetManifest, cfg: &ExperimentConfig) -> Result<Vec<Example<Real>>> {
    (0..m.len())
        .map(|i| {
            let r = m.load_record(i)?;
            let x = assemble_condition(&r.object_image, &r.force, &cfg.conditioning)
                .with_context(|| format!("record {}", r.record_id))?;
            Ok((x, normalize(&r.tactile_image)))
        })
        .collect()
}

/// Rows already logged up to `step`; later rows belong to a run being replaced.
fn logged_rows(path: &Path, step: u64) -> Result<Vec<LossRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<LossRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    Ok(rows.into_iter().filter(|r| r.step <= step).collect())
}

fn write_log(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path).with_context(|| format!("writing {}", path.display()))?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.train.steps = steps;
    }
    if let Some(ds) = args.dataset {
        cfg.data.dataset = Some(ds);
    }
    cfg.validate()?;
    let Some(dataset) = cfg.data.dataset.clone() else {
        bail!("no dataset: pass --dataset or set data.dataset");
    };
    let manifest = load_dataset(&dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let (train_set, test_set) = split_dataset(&manifest, cfg.data.split_ratio, cfg.data.split_seed)?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    detached(&train_set)?.save(&args.out.join("train_manifest.toml"))?;
    detached(&test_set)?.save(&args.out.join("test_manifest.toml"))?;
    let config_text = cfg.to_toml()?;
    std::fs::write(args.out.join("config.toml"), &config_text)?;

    let data = examples(&train_set, &cfg)?;
    let schedule = cfg.schedule.build()?;
    let mut state: TrainState32 = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::<Real>::load(path).with_context(|| format!("loading {}", path.display()))?;
            ckpt.check_compatible(&cfg.schedule, &cfg.conditioning)?;
            if ckpt.meta.architecture != cfg.model.architecture {
                bail!("checkpoint architecture {:?} differs from config {:?}", ckpt.meta.architecture, cfg.model.architecture);
            }
            if ckpt.meta.image_size != [manifest.image_size.0, manifest.image_size.1] {
                bail!("checkpoint image size {:?} differs from dataset {:?}", ckpt.meta.image_size, manifest.image_size);
            }
            let mut s = ckpt.to_state()?;
            s.optimizer.config = cfg.train.optimizer;
            s.seed = cfg.train.seed;
            s
        }
        None => {
            let d = AnyDenoiser::build(&cfg.model.architecture, cfg.model.init_seed)?;
            TrainState::new(d, schedule, cfg.train.optimizer, cfg.train.seed)
        }
    };
    let (h, w) = manifest.image_size;
    state.denoiser.check_input(h, w)?;

    let ctx = ModelContext {
        init_seed: cfg.model.init_seed,
        encoding: cfg.conditioning,
        image_size: manifest.image_size,
        sensor_type: manifest.sensor_type,
        train: cfg.train.train_config(),
        sample: cfg.sample.options,
        experiment_config: Some(config_text),
    };
    let ckpt_path = args.out.join(CHECKPOINT_FILE);
    let log_path = args.out.join(LOSS_LOG);
    let mut rows = if args.resume.is_some() { logged_rows(&log_path, state.step)? } else { Vec::new() };
    write_log(&log_path, &rows)?;

    eprintln!(
        "training on {} of {} records ({}x{}), {} parameters, steps {}..{}",
        data.len(),
        manifest.len(),
        h,
        w,
        state.denoiser.num_params(),
        state.step,
        cfg.train.steps
    );
    while state.step < cfg.train.steps {
        let chunk = cfg.train.checkpoint_every.min(cfg.train.steps - state.step);
        let result = state.fit(&data, cfg.train.batch_size, chunk, |r: &StepReport| {
            rows.push(LossRow { step: r.step, loss: r.loss, loss_ema: r.loss_ema })
        });
        write_log(&log_path, &rows)?;
        // a failed step leaves the parameters untouched, so this is the last good state
        Checkpoint::from_state(&state, &ctx).save(&ckpt_path)?;
        if let Err(e) = result {
            return Err(e).with_context(|| format!("training stopped; last good state (step {}) kept in {}", state.step, ckpt_path.display()));
        }
        eprintln!("step {} loss_ema {:.5}", state.step, state.loss_ema);
    }
    if !ckpt_path.exists() {
        Checkpoint::from_state(&state, &ctx).save(&ckpt_path)?;
    }
    println!("checkpoint {} (step {})", ckpt_path.display(), state.step);
    Ok(())
}
