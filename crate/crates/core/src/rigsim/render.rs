//! Phenomenological tactile and object image synthesis.
//!
//! Sensor coordinates are mm with the origin at the image centre, x along
//! columns and y along rows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Pose, SensorType};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::markers::MarkerSet;
use crate::rigsim::force::{contact_area_mm2, depth_of, ForceModel};
use crate::rigsim::shapes::{ContactProfile, IndenterShape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    /// Unit vector from the surface towards the light; z points out of the gel.
    pub direction: [f64; 3],
    /// Per-channel weight in `[0, 1]`.
    pub color: [f64; 3],
}

impl Light {
    /// Light at `azimuth` degrees around z and `elevation` degrees above the gel.
    pub fn from_angles(azimuth: f64, elevation: f64, color: [f64; 3]) -> Self {
        let (a, e) = (azimuth.to_radians(), elevation.to_radians());
        Self { direction: [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()], color }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerGrid {
    pub rows: usize,
    pub cols: usize,
    /// Pixels between neighbouring dots.
    pub spacing: f64,
    /// Dot radius in pixels.
    pub radius: f64,
    /// Fraction of the shading a dot absorbs at its centre.
    pub darkness: f64,
}

impl MarkerGrid {
    /// Rest positions in pixel coordinates (x, y), row-major.
    pub fn rest_positions(&self, (h, w): (usize, usize)) -> Vec<(f64, f64)> {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (r0, c0) = ((self.rows as f64 - 1.0) / 2.0, (self.cols as f64 - 1.0) / 2.0);
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push((cx + (c as f64 - c0) * self.spacing, cy + (r as f64 - r0) * self.spacing));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub sensor_type: SensorType,
    /// (height, width) in pixels.
    pub image_size: [usize; 2],
    /// Gel width imaged across the columns, mm.
    pub field_of_view: f64,
    /// Flat-gel colour.
    pub base_color: [f64; 3],
    pub lights: Vec<Light>,
    /// Levels per unit change of the Lambert term.
    pub shading_gain: f64,
    /// Exaggeration applied to the indentation slope before shading.
    pub slope_gain: f64,
    /// Levels added per mm of indentation.
    pub indent_shade: f64,
    /// Gaussian sigma smoothing the indentation, mm.
    pub elastomer_blur: f64,
    pub markers: MarkerGrid,
    /// Fraction of the indenter's lateral motion carried by the gel surface.
    pub shear_coupling: f64,
    /// Length scale of the marker displacement decay outside the contact, mm.
    pub decay_radius: f64,
    /// Sigma of the fixed-pattern sensor grain, levels.
    pub grain: f64,
    pub seed: u64,
    pub force: ForceModel,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self::for_sensor(SensorType::RgbMarker, (64, 64))
    }
}

impl RenderConfig {
    /// Defaults for a sensor style, with the marker grid scaled to the image.
    pub fn for_sensor(sensor_type: SensorType, (h, w): (usize, usize)) -> Self {
        let (base_color, lights) = match sensor_type {
            SensorType::WhiteMarker => (
                [150.0, 150.0, 150.0],
                vec![Light::from_angles(45.0, 40.0, [1.0, 1.0, 1.0])],
            ),
            _ => (
                [105.0, 110.0, 120.0],
                vec![
                    Light::from_angles(0.0, 35.0, [1.0, 0.15, 0.1]),
                    Light::from_angles(120.0, 35.0, [0.1, 1.0, 0.15]),
                    Light::from_angles(240.0, 35.0, [0.15, 0.1, 1.0]),
                ],
            ),
        };
        let spacing = (h.min(w) as f64 / 8.0).max(3.0);
        Self {
            sensor_type,
            image_size: [h, w],
            field_of_view: 16.0,
            base_color,
            lights,
            shading_gain: 90.0,
            slope_gain: 1.0,
            indent_shade: 40.0,
            elastomer_blur: 0.25,
            markers: MarkerGrid { rows: 7, cols: 7, spacing, radius: (0.2 * spacing).max(0.8), darkness: 0.8 },
            shear_coupling: 0.6,
            decay_radius: 1.5,
            grain: 1.0,
            seed: 0,
            force: ForceModel::default(),
        }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.image_size[0], self.image_size[1])
    }

    /// mm per pixel.
    pub fn pixel_pitch(&self) -> f64 {
        self.field_of_view / self.image_size[1] as f64
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.size();
        if h < 8 || w < 8 {
            return Err(Error::param("image_size", format!("need at least 8x8, got {h}x{w}")));
        }
        for (name, v) in [
            ("field_of_view", self.field_of_view),
            ("shading_gain", self.shading_gain),
            ("slope_gain", self.slope_gain),
            ("decay_radius", self.decay_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("indent_shade", self.indent_shade),
            ("elastomer_blur", self.elastomer_blur),
            ("grain", self.grain),
            ("shear_coupling", self.shear_coupling),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.lights.is_empty() {
            return Err(Error::param("lights", "need at least one light"));
        }
        for l in &self.lights {
            let n = l.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-6 || l.direction[2] <= 0.0 {
                return Err(Error::param("lights", format!("direction {:?} must be a unit vector with z > 0", l.direction)));
            }
        }
        let m = &self.markers;
        if self.sensor_type.has_markers() {
            if m.rows == 0 || m.cols == 0 || !(m.spacing > 0.0) || !(m.radius > 0.0) || !(0.0..=1.0).contains(&m.darkness) {
                return Err(Error::param("markers", "rows, cols, spacing and radius must be positive, darkness in [0, 1]"));
            }
            let span_x = (m.cols - 1) as f64 * m.spacing + 2.0 * m.radius;
            let span_y = (m.rows - 1) as f64 * m.spacing + 2.0 * m.radius;
            if span_x > w as f64 || span_y > h as f64 {
                return Err(Error::param("markers", format!("{}x{} grid does not fit a {h}x{w} image", m.rows, m.cols)));
            }
        }
        self.force.validate()
    }

    fn to_mm(&self, px: f64, py: f64) -> (f64, f64) {
        let (h, w) = self.size();
        let p = self.pixel_pitch();
        ((px - (w as f64 - 1.0) / 2.0) * p, (py - (h as f64 - 1.0) / 2.0) * p)
    }
}

/// Pose-relative coordinates in the indenter frame.
fn to_local(pose: &Pose, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = (-pose.twist.to_radians()).sin_cos();
    let (dx, dy) = (x - pose.x, y - pose.y);
    (c * dx - s * dy, s * dx + c * dy)
}

fn gaussian_blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let o = k as isize - r;
                    // zero outside: the gel is flat beyond the image
                    let (yy, xx) = if horizontal { (y as isize, x as isize + o) } else { (y as isize + o, x as isize) };
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        acc += t * src[yy as usize * w + xx as usize];
                    }
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Gel indentation in mm at every pixel.
pub fn indentation_map(shape: &IndenterShape, pose: &Pose, cfg: &RenderConfig) -> Vec<f64> {
    let (h, w) = cfg.size();
    let d = depth_of(pose);
    if d == 0.0 {
        return vec![0.0; h * w];
    }
    let mut map = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (mx, my) = cfg.to_mm(x as f64, y as f64);
            let (u, v) = to_local(pose, mx, my);
            map.push((d - shape.gap(u, v)).max(0.0));
        }
    }
    gaussian_blur(&map, h, w, cfg.elastomer_blur / cfg.pixel_pitch())
}

/// Marker displacement in pixels at a rest position given in pixels.
pub fn marker_displacement(
    shape: &IndenterShape,
    profile: &ContactProfile,
    pose: &Pose,
    cfg: &RenderConfig,
    (px, py): (f64, f64),
) -> (f64, f64) {
    let d = depth_of(pose);
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let (mx, my) = cfg.to_mm(px, py);
    let radius = (contact_area_mm2(shape, profile, d) / std::f64::consts::PI).sqrt();
    let outside = ((mx - pose.x).hypot(my - pose.y) - radius).max(0.0);
    let weight = cfg.shear_coupling
        * cfg.force.shear_factor(d)
        * (-outside * outside / (2.0 * cfg.decay_radius * cfg.decay_radius)).exp();
    let (s, c) = pose.twist.to_radians().sin_cos();
    let (rx, ry) = (mx - pose.x, my - pose.y);
    let (tx, ty) = (c * rx - s * ry - rx, s * rx + c * ry - ry);
    let p = cfg.pixel_pitch();
    (weight * (pose.x + tx) / p, weight * (pose.y + ty) / p)
}

fn grain_pattern(cfg: &RenderConfig, n: usize) -> Vec<f64> {
    if cfg.grain == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, cfg.grain).expect("grain validated");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Tactile image for one pose, reusing a precomputed contact profile.
pub fn render_tactile_with(shape: &IndenterShape, profile: &ContactProfile, pose: &Pose, cfg: &RenderConfig) -> Image {
    let (h, w) = cfg.size();
    let depth = indentation_map(shape, pose, cfg);
    let p = cfg.pixel_pitch();
    let mut rgb = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let at = |yy: usize, xx: usize| depth[yy * w + xx];
            let gx = (at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1))) / (2.0 * p);
            let gy = (at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x)) / (2.0 * p);
            let (nx, ny) = (gx * cfg.slope_gain, gy * cfg.slope_gain);
            let norm = (nx * nx + ny * ny + 1.0).sqrt();
            let n = [nx / norm, ny / norm, 1.0 / norm];
            for c in 0..3 {
                let mut v = cfg.base_color[c] + cfg.indent_shade * at(y, x);
                for l in &cfg.lights {
                    let lambert = n[0] * l.direction[0] + n[1] * l.direction[1] + n[2] * l.direction[2];
                    v += cfg.shading_gain * l.color[c] * (lambert - l.direction[2]);
                }
                rgb[(y * w + x) * 3 + c] = v;
            }
        }
    }
    if cfg.sensor_type.has_markers() {
        let m = &cfg.markers;
        for rest in m.rest_positions((h, w)) {
            let (dx, dy) = marker_displacement(shape, profile, pose, cfg, rest);
            let (cx, cy) = (rest.0 + dx, rest.1 + dy);
            let reach = m.radius + 1.0;
            let (y0, y1) = ((cy - reach).floor().max(0.0) as usize, ((cy + reach).ceil().max(0.0) as usize).min(h - 1));
            let (x0, x1) = ((cx - reach).floor().max(0.0) as usize, ((cx + reach).ceil().max(0.0) as usize).min(w - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dist = (x as f64 - cx).hypot(y as f64 - cy);
                    let cover = (m.radius + 0.5 - dist).clamp(0.0, 1.0);
                    for c in 0..3 {
                        rgb[(y * w + x) * 3 + c] *= 1.0 - m.darkness * cover;
                    }
                }
            }
        }
    }
    let grain = grain_pattern(cfg, rgb.len());
    let pixels = rgb.iter().zip(&grain).map(|(v, g)| (v + g).round().clamp(0.0, 255.0) as u8).collect();
    Image::new(h, w, 3, pixels).expect("buffer sized to the image")
}

pub fn render_tactile(shape: &IndenterShape, pose: &Pose, cfg: &RenderConfig) -> Image {
    render_tactile_with(shape, &shape.profile(), pose, cfg)
}

/// Top-down view of the indenter face at the pose's lateral offset and twist.
pub fn render_object(shape: &IndenterShape, pose: &Pose, cfg: &RenderConfig) -> Image {
    let (h, w) = cfg.size();
    let p = cfg.pixel_pitch();
    let (bg, fg) = (30.0, [225.0, 215.0, 200.0]);
    Image::from_fn(h, w, 3, |y, x, c| {
        let (mx, my) = cfg.to_mm(x as f64, y as f64);
        let (u, v) = to_local(pose, mx, my);
        let cover = (0.5 - shape.signed_distance(u, v) / p).clamp(0.0, 1.0);
        let relief = (-shape.gap(u, v) / 0.5).exp();
        let face = fg[c] * (0.45 + 0.55 * relief);
        (bg + cover * (face - bg)).round() as u8
    })
}

/// Uniform background with anti-aliased dark dots at the given centroids.
pub fn dot_grid_image((h, w): (usize, usize), markers: &MarkerSet, radius: f64, base: u8, ink: u8) -> Image {
    let mut img = Image::filled(h, w, 3, base);
    let span = f64::from(base) - f64::from(ink);
    for m in &markers.markers {
        let reach = radius + 1.0;
        let y0 = (m.y - reach).floor().max(0.0) as usize;
        let x0 = (m.x - reach).floor().max(0.0) as usize;
        let y1 = ((m.y + reach).ceil().max(0.0) as usize).min(h - 1);
        let x1 = ((m.x + reach).ceil().max(0.0) as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cover = (radius + 0.5 - (x as f64 - m.x).hypot(y as f64 - m.y)).clamp(0.0, 1.0);
                let v = (f64::from(img.get(y, x, 0)) - span * cover).round().clamp(0.0, 255.0) as u8;
                for c in 0..3 {
                    img.set(y, x, c, v);
                }
            }
        }
    }
    img
}

/// Pixels whose largest per-channel difference from `background` exceeds `threshold`.
pub fn contact_area(img: &Image, background: &Image, threshold: u8) -> Result<usize> {
    if !img.same_shape(background) {
        return Err(Error::Shape("contact_area needs images of the same shape".into()));
    }
    let c = img.channels();
    Ok(img
        .pixels()
        .chunks(c)
        .zip(background.pixels().chunks(c))
        .filter(|(a, b)| a.iter().zip(*b).any(|(&p, &q)| p.abs_diff(q) > threshold))
        .count())
}
