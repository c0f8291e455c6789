//! Full-reference image similarity: MSE, MAE, SSIM and PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
    /// Decibels; `f64::INFINITY` for identical images.
    pub psnr: f64,
}

impl MetricReport {
    /// Element-wise mean of several reports. PSNR is averaged as reported,
    /// so a single identical pair makes the mean infinite.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport { mse: sum(|r| r.mse), mae: sum(|r| r.mae), ssim: sum(|r| r.ssim), psnr: sum(|r| r.psnr) })
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10()
    }
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let s: f64 = a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum();
    Ok(s / a.pixels().len() as f64)
}

pub fn mae(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let s: f64 = a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs()).sum();
    Ok(s / a.pixels().len() as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

/// Normalized 1-D Gaussian taps, centre at index `SSIM_WINDOW / 2`.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Gaussian-weighted local mean with the window clipped at the borders and
/// re-normalized over the part that lies inside the image.
fn local_mean(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = SSIM_WINDOW / 2;
    let pass = |src: &[f64], out: &mut [f64], len: usize, stride: usize, lines: usize, line_stride: usize| {
        for l in 0..lines {
            for i in 0..len {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(len - 1);
                let (mut acc, mut norm) = (0.0, 0.0);
                for j in lo..=hi {
                    let t = taps[j + r - i];
                    acc += t * src[l * line_stride + j * stride];
                    norm += t;
                }
                out[l * line_stride + i * stride] = acc / norm;
            }
        }
    };
    let mut tmp = vec![0.0; h * w];
    pass(src, &mut tmp, w, 1, h, w);
    let mut out = vec![0.0; h * w];
    pass(&tmp, &mut out, h, w, w, 1);
    out
}

/// Mean SSIM of one pair of single-channel planes.
fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = local_mean(x, h, w, &taps);
    let my = local_mean(y, h, w, &taps);
    let exx = local_mean(&xx, h, w, &taps);
    let eyy = local_mean(&yy, h, w, &taps);
    let exy = local_mean(&xy, h, w, &taps);
    let mut total = 0.0;
    for i in 0..h * w {
        let (ux, uy) = (mx[i], my[i]);
        let vx = exx[i] - ux * ux;
        let vy = eyy[i] - uy * uy;
        let cxy = exy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / (h * w) as f64
}

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 255, averaged over pixels and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.pixels() == b.pixels() {
        return Ok(1.0);
    }
    let (h, w, c) = (a.height(), a.width(), a.channels());
    let plane = |img: &Image, ch: usize| -> Vec<f64> { img.pixels().iter().skip(ch).step_by(c).map(|&v| f64::from(v)).collect() };
    let total: f64 = (0..c).map(|ch| ssim_plane(&plane(a, ch), &plane(b, ch), h, w)).sum();
    Ok(total / c as f64)
}

pub fn image_similarity(a: &Image, b: &Image) -> Result<MetricReport> {
    let mse = mse(a, b)?;
    Ok(MetricReport { mse, mae: mae(a, b)?, ssim: ssim(a, b)?, psnr: psnr_from_mse(mse) })
}
