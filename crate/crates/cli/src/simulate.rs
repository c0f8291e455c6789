use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use tactile_diffusion::rigsim::{generate_dataset, MANIFEST_FILE};

use crate::config::ExperimentConfig;

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Renderer seed (sensor grain); overrides `rigsim.render.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for images and the manifest.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.rigsim.render.seed = seed;
    }
    let rig = &cfg.rigsim;
    let manifest = generate_dataset(&rig.shapes, &rig.trajectory, &rig.render, &args.out)
        .with_context(|| format!("simulating into {}", args.out.display()))?;
    std::fs::write(args.out.join("config.toml"), cfg.to_toml()?).context("writing config.toml")?;
    println!("{} records ({} shapes) -> {}", manifest.len(), rig.shapes.len(), args.out.join(MANIFEST_FILE).display());
    Ok(())
}
