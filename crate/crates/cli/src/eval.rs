use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use tactile_diffusion::image::Image;
use tactile_diffusion::metrics::{
    compute_flow, detect_markers, export_flow, image_similarity, marker_displacement_error, match_by_assignment,
    DisplacementError, FlowField, Roi,
};

use crate::config::{ExperimentConfig, MetricsSection};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory: report.csv, report.txt and flow/ overlays.
    #[arg(long)]
    out: PathBuf,
    /// Directory of reference PNGs.
    #[arg(long)]
    real: PathBuf,
    /// Directory of generated PNGs, paired with --real by file name.
    #[arg(long)]
    gen: PathBuf,
    /// Enable marker analysis regardless of `metrics.markers`.
    #[arg(long)]
    markers: bool,
}

/// One line of the CSV report. Marker columns are empty when marker mode is
/// off or detection failed; `status` then says why.
#[derive(Debug, Serialize)]
struct Row {
    image: String,
    mse: f64,
    mae: f64,
    ssim: f64,
    psnr: f64,
    d_sum: Option<f64>,
    d_mean: Option<f64>,
    markers: Option<usize>,
    status: String,
}

fn png_names(dir: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            out.insert(name);
        }
    }
    Ok(out)
}

fn markers(real: &Image, gen: &Image, m: &MetricsSection) -> tactile_diffusion::Result<(DisplacementError, FlowField)> {
    let grid = (m.grid[0], m.grid[1]);
    let a = detect_markers(real, grid, &Roi::central(real, m.roi_fraction), &m.detect)?;
    let mut b = detect_markers(gen, grid, &Roi::central(gen, m.roi_fraction), &m.detect)?;
    if m.assignment {
        b = match_by_assignment(&a, &b)?;
    }
    Ok((marker_displacement_error(&a, &b)?, compute_flow(&a, &b)?))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn table(rows: &[Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<28} {:>10} {:>8} {:>7} {:>8} {:>10} {:>8} {:>7}  status", "image", "mse", "mae", "ssim", "psnr", "d_sum", "d_mean", "markers");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<28} {:>10.3} {:>8.3} {:>7.4} {:>8.2} {:>10} {:>8} {:>7}  {}",
            r.image,
            r.mse,
            r.mae,
            r.ssim,
            r.psnr,
            cell(r.d_sum, 2),
            cell(r.d_mean, 3),
            r.markers.map_or_else(|| "-".into(), |n| n.to_string()),
            r.status
        );
    }
    s
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(args.config.as_deref())?;
    cfg.metrics.markers |= args.markers;
    cfg.validate()?;
    let m = &cfg.metrics;

    let real = png_names(&args.real)?;
    let gen = png_names(&args.gen)?;
    let unpaired: Vec<String> = real
        .symmetric_difference(&gen)
        .map(|n| format!("{} (only in {})", n, if real.contains(n) { args.real.display() } else { args.gen.display() }))
        .collect();
    if !unpaired.is_empty() {
        bail!("{} unpaired files: {}", unpaired.len(), unpaired.join(", "));
    }
    if real.is_empty() {
        bail!("no PNG files in {}", args.real.display());
    }

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let flow_dir = args.out.join("flow");
    if m.markers {
        std::fs::create_dir_all(&flow_dir)?;
    }
    let mut rows = Vec::with_capacity(real.len());
    for name in &real {
        let a = Image::load_png(&args.real.join(name))?;
        let b = Image::load_png(&args.gen.join(name))?;
        let rep = image_similarity(&a, &b).with_context(|| name.clone())?;
        let mut row = Row {
            image: name.clone(),
            mse: rep.mse,
            mae: rep.mae,
            ssim: rep.ssim,
            psnr: rep.psnr,
            d_sum: None,
            d_mean: None,
            markers: None,
            status: "ok".into(),
        };
        if m.markers {
            match markers(&a, &b, m) {
                Ok((d, flow)) => {
                    export_flow(&flow, &b, &m.flow, &flow_dir.join(name))?;
                    (row.d_sum, row.d_mean, row.markers) = (Some(d.d_sum), Some(d.d_mean), Some(d.count));
                }
                Err(e) => row.status = format!("markers: {e}"),
            }
        }
        rows.push(row);
    }

    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let aggregate = Row {
        image: "mean".into(),
        mse: mean(rows.iter().map(|r| r.mse)).unwrap_or(f64::NAN),
        mae: mean(rows.iter().map(|r| r.mae)).unwrap_or(f64::NAN),
        ssim: mean(rows.iter().map(|r| r.ssim)).unwrap_or(f64::NAN),
        psnr: mean(rows.iter().map(|r| r.psnr)).unwrap_or(f64::NAN),
        d_sum: mean(rows.iter().filter_map(|r| r.d_sum)),
        d_mean: mean(rows.iter().filter_map(|r| r.d_mean)),
        markers: m.markers.then_some(rows.iter().filter_map(|r| r.markers).sum()),
        status: format!("{} pairs, {failed} marker failures", rows.len()),
    };
    rows.push(aggregate);

    let mut w = csv::Writer::from_path(args.out.join(REPORT_CSV)).context("writing report.csv")?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let text = table(&rows);
    let provenance = cfg.to_toml()?;
    let header: String = provenance.lines().map(|l| format!("# {l}\n")).collect();
    std::fs::write(args.out.join(REPORT_TXT), format!("{header}\n{text}")).context("writing report.txt")?;
    print!("{text}");
    Ok(())
}
