use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use tactile_diffusion::dataset::{load_dataset, ForceVector};
use tactile_diffusion::image::Image;
use tactile_diffusion::Checkpoint32;

use crate::config::ExperimentConfig;

#[derive(Args)]
pub struct GenerateArgs {
    /// Supplies `sample.seed`; defaults to the config embedded in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampler seed; overrides `sample.seed`. Record i of a dataset uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output PNG, or output directory with --dataset.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Object image (PNG) for a single generation.
    #[arg(long, requires = "force", conflicts_with = "dataset")]
    object: Option<PathBuf>,
    /// fx,fy,fz,mx,my,mz in N and N·mm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    force: Option<Vec<f64>>,
    /// Generate for every record of a manifest; writes generated/ and real/.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let ckpt = Checkpoint32::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let cfg = match (&args.config, &ckpt.meta.experiment_config) {
        (Some(path), _) => ExperimentConfig::load(Some(path))?,
        (None, Some(text)) => ExperimentConfig::parse(text).context("config embedded in checkpoint")?,
        (None, None) => ExperimentConfig::default(),
    };
    let seed = args.seed.unwrap_or(cfg.sample.seed);
    let generator = ckpt.generator()?;

    match (&args.object, &args.dataset) {
        (Some(object), None) => {
            let force = args.force.as_deref().context("--force is required with --object")?;
            let force = ForceVector::from(<[f64; 6]>::try_from(force).context("--force takes six values")?);
            let obj = Image::load_png(object)?;
            let img = generator.generate(&obj, &force, seed)?;
            if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            img.save_png(&args.out)?;
            println!("{}", args.out.display());
        }
        (None, Some(manifest_path)) => {
            let m = load_dataset(manifest_path).with_context(|| format!("loading dataset {}", manifest_path.display()))?;
            let (gen_dir, real_dir) = (args.out.join("generated"), args.out.join("real"));
            std::fs::create_dir_all(&gen_dir)?;
            std::fs::create_dir_all(&real_dir)?;
            for i in 0..m.len() {
                let r = m.load_record(i)?;
                let img = generator
                    .generate(&r.object_image, &r.force, seed.wrapping_add(i as u64))
                    .with_context(|| format!("record {}", r.record_id))?;
                let name = format!("{}.png", r.record_id);
                img.save_png(&gen_dir.join(&name))?;
                r.tactile_image.save_png(&real_dir.join(&name))?;
                eprintln!("[{}/{}] {}", i + 1, m.len(), r.record_id);
            }
            println!("{} images -> {}", m.len(), gen_dir.display());
        }
        _ => bail!("pass either --object with --force, or --dataset"),
    }
    Ok(())
}
