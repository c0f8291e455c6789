//! Sparse marker flow: per-marker displacement vectors and arrow overlays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::metrics::markers::{correspond, MarkerSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowVector {
    pub row: usize,
    pub col: usize,
    /// Anchor: the real-image centroid.
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

impl FlowVector {
    pub fn magnitude(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub vectors: Vec<FlowVector>,
}

impl FlowField {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.vectors.len().max(1) as f64;
        (self.vectors.iter().map(|v| v.dx).sum::<f64>() / n, self.vectors.iter().map(|v| v.dy).sum::<f64>() / n)
    }
}

/// `gen - real` per grid index, anchored at the real centroids.
pub fn compute_flow(real: &MarkerSet, gen: &MarkerSet) -> Result<FlowField> {
    let vectors = correspond(real, gen)?
        .into_iter()
        .map(|(r, g)| FlowVector { row: r.row, col: r.col, x: r.x, y: r.y, dx: g.x - r.x, dy: g.y - r.y })
        .collect();
    Ok(FlowField { vectors })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowStyle {
    /// Drawn arrow length per pixel of displacement.
    pub scale: f64,
    pub color: [u8; 3],
    /// Arrowhead length as a fraction of the shaft.
    pub head: f64,
}

impl Default for FlowStyle {
    fn default() -> Self {
        Self { scale: 5.0, color: [255, 32, 32], head: 0.3 }
    }
}

fn plot(img: &mut Image, x: i64, y: i64, color: [u8; 3]) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
        return;
    }
    for (c, &v) in color.iter().enumerate().take(img.channels()) {
        img.set(y as usize, x as usize, c, v);
    }
}

/// Bresenham segment.
pub fn draw_line(img: &mut Image, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: [u8; 3]) {
    let (mut x, mut y) = (x0.round() as i64, y0.round() as i64);
    let (xe, ye) = (x1.round() as i64, y1.round() as i64);
    let dx = (xe - x).abs();
    let dy = -(ye - y).abs();
    let sx = if x < xe { 1 } else { -1 };
    let sy = if y < ye { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(img, x, y, color);
        if x == xe && y == ye {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Draws every vector as an arrow onto a copy of `background` (RGB).
pub fn render_flow(field: &FlowField, background: &Image, style: &FlowStyle) -> Image {
    let mut img = if background.channels() == 3 {
        background.clone()
    } else {
        Image::from_fn(background.height(), background.width(), 3, |y, x, _| background.get(y, x, 0))
    };
    for v in &field.vectors {
        let tip = (v.x + v.dx * style.scale, v.y + v.dy * style.scale);
        draw_line(&mut img, (v.x, v.y), tip, style.color);
        let len = (v.dx * style.scale).hypot(v.dy * style.scale);
        if len >= 1.0 {
            let (ux, uy) = (v.dx * style.scale / len, v.dy * style.scale / len);
            let h = (len * style.head).max(1.5);
            for side in [-1.0, 1.0] {
                // 30 degrees off the shaft, pointing back
                let (c, s) = (0.866_025_403_784_438_6, 0.5 * side);
                let bx = -(ux * c - uy * s);
                let by = -(ux * s + uy * c);
                draw_line(&mut img, tip, (tip.0 + bx * h, tip.1 + by * h), style.color);
            }
        } else {
            plot(&mut img, v.x.round() as i64, v.y.round() as i64, style.color);
        }
    }
    img
}

/// Writes the arrow overlay as PNG.
pub fn export_flow(field: &FlowField, background: &Image, style: &FlowStyle, path: &Path) -> Result<()> {
    render_flow(field, background, style).save_png(path)
}
