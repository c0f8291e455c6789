//! Independent reference implementations and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_diffusion::image::Image;

pub fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, c, |_, _, _| rng.random())
}

pub fn naive_mse(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                s += d * d;
            }
        }
    }
    s / (a.height() * a.width() * a.channels()) as f64
}

pub fn naive_mae(a: &Image, b: &Image) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                s += (a.get(y, x, c) as f64 - b.get(y, x, c) as f64).abs();
            }
        }
    }
    s / (a.height() * a.width() * a.channels()) as f64
}

pub fn naive_psnr(a: &Image, b: &Image) -> f64 {
    let m = naive_mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / m).log10()
    }
}

/// SSIM by direct 2-D weighted sums: 11x11 Gaussian (sigma 1.5) window,
/// truncated at the image border and renormalized over the part inside.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (h, w, ch) = (a.height() as isize, a.width() as isize, a.channels());
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut total = 0.0;
    for c in 0..ch {
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (mut sw, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -5isize..=5 {
                    for dx in -5isize..=5 {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy < 0 || xx < 0 || yy >= h || xx >= w {
                            continue;
                        }
                        let wt = (-((dx * dx + dy * dy) as f64) / (2.0 * 1.5 * 1.5)).exp();
                        let p = a.get(yy as usize, xx as usize, c) as f64;
                        let q = b.get(yy as usize, xx as usize, c) as f64;
                        sw += wt;
                        sx += wt * p;
                        sy += wt * q;
                        sxx += wt * p * p;
                        syy += wt * q * q;
                        sxy += wt * p * q;
                    }
                }
                let (mx, my) = (sx / sw, sy / sw);
                let vx = sxx / sw - mx * mx;
                let vy = syy / sw - my * my;
                let cov = sxy / sw - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += acc / (h * w) as f64;
    }
    total / ch as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
