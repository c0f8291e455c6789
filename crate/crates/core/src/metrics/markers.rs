//! Marker detection and the marker displacement error.
//!
//! Markers are dark dots printed on the elastomer. Detection runs an adaptive
//! mean threshold, labels 8-connected components, keeps components within an
//! area band, and computes darkness-weighted centroids. Grid indices come from
//! clustering centroid rows and columns independently.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectParams {
    /// Side of the square averaging window of the adaptive threshold (odd).
    pub window: usize,
    /// A pixel is foreground when darker than the local mean by more than this.
    pub offset: f64,
    pub min_area: usize,
    pub max_area: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { window: 15, offset: 12.0, min_area: 3, max_area: 400 }
    }
}

/// Axis-aligned region in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Roi {
    pub fn full(img: &Image) -> Self {
        Self { x: 0.0, y: 0.0, width: img.width() as f64, height: img.height() as f64 }
    }

    /// Centred region covering `fraction` of each image side.
    pub fn central(img: &Image, fraction: f64) -> Self {
        let (w, h) = (img.width() as f64, img.height() as f64);
        Self { x: w * (1.0 - fraction) / 2.0, y: h * (1.0 - fraction) / 2.0, width: w * fraction, height: h * fraction }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub row: usize,
    pub col: usize,
    /// Centroid in pixels; pixel centres sit at integer coordinates.
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub markers: Vec<Marker>,
    /// (rows, cols)
    pub grid_shape: (usize, usize),
}

impl MarkerSet {
    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    /// Regular grid of centroids, row-major; handy for synthetic fixtures.
    pub fn regular(rows: usize, cols: usize, origin: (f64, f64), spacing: f64) -> Self {
        let markers = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| Marker { row: r, col: c, x: origin.0 + c as f64 * spacing, y: origin.1 + r as f64 * spacing }))
            .collect();
        Self { markers, grid_shape: (rows, cols) }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            markers: self.markers.iter().map(|m| Marker { x: m.x + dx, y: m.y + dy, ..*m }).collect(),
            grid_shape: self.grid_shape,
        }
    }

    pub fn by_index(&self) -> HashMap<(usize, usize), (f64, f64)> {
        self.markers.iter().map(|m| ((m.row, m.col), (m.x, m.y))).collect()
    }
}

/// Marker centroid before grid assignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub area: usize,
}

/// Adaptive-threshold foreground mask and the local mean it was derived from.
pub fn adaptive_threshold(gray: &[f64], h: usize, w: usize, window: usize, offset: f64) -> (Vec<bool>, Vec<f64>) {
    let r = window / 2;
    let mut integral = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += gray[y * w + x];
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let mut mask = vec![false; h * w];
    let mut mean = vec![0.0; h * w];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0] + integral[y0 * (w + 1) + x0];
            let m = s / ((y1 - y0) * (x1 - x0)) as f64;
            mean[y * w + x] = m;
            mask[y * w + x] = gray[y * w + x] < m - offset;
        }
    }
    (mask, mean)
}

/// Markers are dark in every channel, so detection runs on the brightest
/// channel; coloured shading then cannot pass for ink.
///
/// Labels 8-connected foreground components and returns their centroids,
/// weighted by how far each pixel falls below the local mean.
pub fn find_blobs(img: &Image, params: &DetectParams) -> Vec<Blob> {
    let (h, w) = (img.height(), img.width());
    let gray = img.to_value();
    let (mask, mean) = adaptive_threshold(&gray, h, w, params.window.max(1), params.offset);
    let mut seen = vec![false; h * w];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut sw, mut sx, mut sy, mut area) = (0.0, 0.0, 0.0, 0usize);
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            let wt = (mean[i] - gray[i]).max(1e-6);
            sw += wt;
            sx += wt * x as f64;
            sy += wt * y as f64;
            area += 1;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if area >= params.min_area && area <= params.max_area {
            blobs.push(Blob { x: sx / sw, y: sy / sw, area });
        }
    }
    blobs
}

/// Splits sorted coordinates into clusters at gaps wider than `gap`.
/// Returns a cluster label per input index (in the original order) and the
/// cluster means.
fn cluster_1d(values: &[f64], gap: f64) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut labels = vec![0; values.len()];
    let mut means = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    let mut prev = f64::NEG_INFINITY;
    for &i in &order {
        if count > 0 && values[i] - prev > gap {
            means.push(sum / count as f64);
            sum = 0.0;
            count = 0;
        }
        labels[i] = means.len();
        sum += values[i];
        count += 1;
        prev = values[i];
    }
    if count > 0 {
        means.push(sum / count as f64);
    }
    (labels, means)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Start of the `k` consecutive clusters whose mean is closest to `target`.
fn central_window(means: &[f64], k: usize, target: f64) -> usize {
    (0..=means.len() - k)
        .min_by(|&a, &b| {
            let ca = means[a..a + k].iter().sum::<f64>() / k as f64;
            let cb = means[b..b + k].iter().sum::<f64>() / k as f64;
            (ca - target).abs().total_cmp(&(cb - target).abs())
        })
        .expect("non-empty window range")
}

/// Fallback when every blob belongs to the grid but displacements blur the
/// gaps between rows or columns: rows are consecutive runs of the y-order,
/// columns the x-order within a row. Rejected unless every row and every
/// column stays within one spacing.
fn assign_by_rank(blobs: &[Blob], (rows, cols): (usize, usize), spacing: f64) -> Option<MarkerSet> {
    if blobs.len() != rows * cols {
        return None;
    }
    let mut sorted: Vec<&Blob> = blobs.iter().collect();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y));
    let mut markers = Vec::with_capacity(blobs.len());
    for (row, chunk) in sorted.chunks_mut(cols).enumerate() {
        chunk.sort_by(|a, b| a.x.total_cmp(&b.x));
        markers.extend(chunk.iter().enumerate().map(|(col, b)| Marker { row, col, x: b.x, y: b.y }));
    }
    let spread = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        hi - lo
    };
    let rows_ok = (0..rows).all(|r| spread(&mut markers[r * cols..(r + 1) * cols].iter().map(|m| m.y)) < spacing);
    let cols_ok = (0..cols).all(|c| spread(&mut markers.iter().filter(|m| m.col == c).map(|m| m.x)) < spacing);
    (rows_ok && cols_ok).then_some(MarkerSet { markers, grid_shape: (rows, cols) })
}

/// Assigns grid indices to blobs and keeps the central `rows x cols` block.
pub fn assign_grid(blobs: &[Blob], (rows, cols): (usize, usize), roi: &Roi) -> Result<MarkerSet> {
    let expected = rows * cols;
    if blobs.is_empty() {
        return Err(Error::NoMarkers);
    }
    if blobs.len() < expected || blobs.len() < 2 {
        return Err(Error::Detection { expected, found: blobs.len() });
    }
    let spacing = median(
        blobs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                blobs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| (a.x - b.x).hypot(a.y - b.y))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
    );
    let gap = 0.5 * spacing;
    let (row_of, row_means) = cluster_1d(&blobs.iter().map(|b| b.y).collect::<Vec<_>>(), gap);
    let (col_of, col_means) = cluster_1d(&blobs.iter().map(|b| b.x).collect::<Vec<_>>(), gap);
    if row_means.len() < rows || col_means.len() < cols {
        return assign_by_rank(blobs, (rows, cols), spacing)
            .ok_or(Error::Detection { expected, found: blobs.len().min(row_means.len() * col_means.len()) });
    }
    let (cx, cy) = roi.center();
    let r0 = central_window(&row_means, rows, cy);
    let c0 = central_window(&col_means, cols, cx);
    let mut cells: HashMap<(usize, usize), Vec<&Blob>> = HashMap::new();
    for (i, b) in blobs.iter().enumerate() {
        let (r, c) = (row_of[i], col_of[i]);
        if (r0..r0 + rows).contains(&r) && (c0..c0 + cols).contains(&c) {
            cells.entry((r - r0, c - c0)).or_default().push(b);
        }
    }
    let found: usize = cells.values().map(Vec::len).sum();
    if cells.len() != expected || found != expected {
        return assign_by_rank(blobs, (rows, cols), spacing).ok_or(Error::Detection { expected, found });
    }
    let mut markers: Vec<Marker> = cells.into_iter().map(|((row, col), b)| Marker { row, col, x: b[0].x, y: b[0].y }).collect();
    markers.sort_by_key(|m| (m.row, m.col));
    Ok(MarkerSet { markers, grid_shape: (rows, cols) })
}

/// Blobs smaller than this fraction of the median blob area are discarded.
pub const MIN_RELATIVE_AREA: f64 = 0.35;

/// Finds exactly `rows * cols` markers in the central part of `roi`.
pub fn detect_markers(img: &Image, grid_shape: (usize, usize), roi: &Roi, params: &DetectParams) -> Result<MarkerSet> {
    let gray = img.to_value();
    let (lo, hi) = gray.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if gray.is_empty() || hi - lo < 1.0 {
        return Err(Error::NoMarkers);
    }
    let mut blobs: Vec<Blob> = find_blobs(img, params).into_iter().filter(|b| roi.contains(b.x, b.y)).collect();
    if !blobs.is_empty() {
        // specks from shading edges are far smaller than printed dots
        let typical = median(blobs.iter().map(|b| b.area as f64).collect());
        blobs.retain(|b| b.area as f64 >= MIN_RELATIVE_AREA * typical);
    }
    assign_grid(&blobs, grid_shape, roi)
}

/// Summed and per-marker mean Euclidean distance between corresponding markers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementError {
    pub d_sum: f64,
    pub d_mean: f64,
    pub count: usize,
}

impl DisplacementError {
    fn from_distances(d: impl Iterator<Item = f64>) -> Result<Self> {
        let (mut sum, mut n) = (0.0, 0usize);
        for v in d {
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Correspondence("no markers to compare".into()));
        }
        Ok(Self { d_sum: sum, d_mean: sum / n as f64, count: n })
    }
}

/// Pairs markers by grid index; both sets must cover the same grid.
pub fn correspond(real: &MarkerSet, gen: &MarkerSet) -> Result<Vec<(Marker, Marker)>> {
    if real.grid_shape != gen.grid_shape {
        return Err(Error::Correspondence(format!("grid {:?} vs {:?}", real.grid_shape, gen.grid_shape)));
    }
    if real.len() != gen.len() {
        return Err(Error::Correspondence(format!("{} vs {} markers", real.len(), gen.len())));
    }
    let g: HashMap<(usize, usize), &Marker> = gen.markers.iter().map(|m| ((m.row, m.col), m)).collect();
    if g.len() != gen.len() {
        return Err(Error::Correspondence("duplicate grid index in generated set".into()));
    }
    let mut pairs: Vec<(Marker, Marker)> = real
        .markers
        .iter()
        .map(|r| {
            g.get(&(r.row, r.col))
                .map(|m| (*r, **m))
                .ok_or_else(|| Error::Correspondence(format!("no generated marker at grid index ({}, {})", r.row, r.col)))
        })
        .collect::<Result<_>>()?;
    pairs.sort_by_key(|(r, _)| (r.row, r.col));
    Ok(pairs)
}

pub fn marker_displacement_error(real: &MarkerSet, gen: &MarkerSet) -> Result<DisplacementError> {
    let pairs = correspond(real, gen)?;
    DisplacementError::from_distances(pairs.iter().map(|(r, g)| (r.x - g.x).hypot(r.y - g.y)))
}

/// Minimum-total-distance one-to-one matching; for grids too distorted for
/// index-based correspondence. Returns `gen` relabelled with `real`'s indices.
pub fn match_by_assignment(real: &MarkerSet, gen: &MarkerSet) -> Result<MarkerSet> {
    if real.len() != gen.len() || real.is_empty() {
        return Err(Error::Correspondence(format!("{} vs {} markers", real.len(), gen.len())));
    }
    let n = real.len();
    let cost: Vec<f64> = real
        .markers
        .iter()
        .flat_map(|r| gen.markers.iter().map(move |g| (r.x - g.x).hypot(r.y - g.y)))
        .collect();
    let assign = hungarian(&cost, n);
    let markers = real
        .markers
        .iter()
        .zip(&assign)
        .map(|(r, &j)| Marker { row: r.row, col: r.col, x: gen.markers[j].x, y: gen.markers[j].y })
        .collect();
    Ok(MarkerSet { markers, grid_shape: real.grid_shape })
}

/// Square assignment problem, shortest augmenting paths with potentials.
/// `cost` is row-major `n x n`; returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_shift_of_three_four() {
        let real = MarkerSet::regular(18, 18, (10.0, 10.0), 12.0);
        let gen = real.translated(3.0, 4.0);
        let d = marker_displacement_error(&real, &gen).unwrap();
        assert!((d.d_sum - 1620.0).abs() < 1e-9);
        assert!((d.d_mean - 5.0).abs() < 1e-12);
        assert_eq!(d.count, 324);
    }

    #[test]
    fn identical_sets_have_zero_error() {
        let real = MarkerSet::regular(4, 5, (0.0, 0.0), 3.0);
        let d = marker_displacement_error(&real, &real).unwrap();
        assert_eq!((d.d_sum, d.d_mean), (0.0, 0.0));
    }

    #[test]
    fn order_of_markers_does_not_matter() {
        let real = MarkerSet::regular(3, 3, (0.0, 0.0), 5.0);
        let mut gen = real.translated(1.0, -2.0);
        gen.markers.reverse();
        gen.markers.swap(0, 4);
        let a = marker_displacement_error(&real, &gen).unwrap();
        assert!((a.d_mean - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_a_correspondence_error() {
        let a = MarkerSet::regular(3, 3, (0.0, 0.0), 5.0);
        let b = MarkerSet::regular(3, 4, (0.0, 0.0), 5.0);
        assert!(matches!(marker_displacement_error(&a, &b), Err(Error::Correspondence(_))));
    }

    #[test]
    fn hungarian_recovers_a_permutation() {
        let real = MarkerSet::regular(3, 4, (0.0, 0.0), 10.0);
        let mut gen = real.translated(0.7, -0.4);
        gen.markers.rotate_left(5);
        for m in &mut gen.markers {
            m.row = 0;
            m.col = 0;
        }
        let matched = match_by_assignment(&real, &gen).unwrap();
        let d = marker_displacement_error(&real, &matched).unwrap();
        assert!((d.d_mean - 0.7f64.hypot(0.4)).abs() < 1e-12);
    }

    #[test]
    fn hungarian_small_known_optimum() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn blank_image_has_no_markers() {
        let img = Image::filled(64, 64, 3, 180);
        let r = detect_markers(&img, (4, 4), &Roi::full(&img), &DetectParams::default());
        assert!(matches!(r, Err(Error::NoMarkers)));
    }

    fn blob(x: f64, y: f64) -> Blob {
        Blob { x, y, area: 12 }
    }

    #[test]
    fn half_spacing_shear_falls_back_to_rank_order() {
        // middle block pushed down and right by half a spacing
        let blobs: Vec<Blob> = MarkerSet::regular(5, 5, (10.0, 10.0), 10.0)
            .markers
            .iter()
            .map(|m| if (1..4).contains(&m.row) && (1..4).contains(&m.col) { blob(m.x + 5.0, m.y + 5.0) } else { blob(m.x, m.y) })
            .collect();
        let roi = Roi { x: 0.0, y: 0.0, width: 70.0, height: 70.0 };
        let set = assign_grid(&blobs, (5, 5), &roi).unwrap();
        let idx = set.by_index();
        assert_eq!(idx[&(2, 2)], (35.0, 35.0));
        assert_eq!(idx[&(0, 4)], (50.0, 10.0));
        assert_eq!(idx[&(4, 0)], (10.0, 50.0));
    }

    #[test]
    fn rank_fallback_rejects_scrambled_rows() {
        let mut blobs: Vec<Blob> = MarkerSet::regular(3, 3, (10.0, 10.0), 10.0).markers.iter().map(|m| blob(m.x, m.y)).collect();
        blobs[0].y = 40.0;
        assert!(assign_by_rank(&blobs, (3, 3), 10.0).is_none());
    }

    #[test]
    fn specks_are_dropped_before_assignment() {
        let truth = MarkerSet::regular(4, 4, (12.0, 12.0), 12.0);
        let mut img = crate::rigsim::dot_grid_image((60, 60), &truth, 2.5, 200, 30);
        img.set(30, 30, 0, 0);
        img.set(30, 30, 1, 0);
        img.set(30, 30, 2, 0);
        let found = detect_markers(&img, (4, 4), &Roi::full(&img), &DetectParams { min_area: 1, ..Default::default() }).unwrap();
        assert_eq!(found.len(), 16);
    }

    #[test]
    fn saturated_colour_is_not_ink() {
        let truth = MarkerSet::regular(3, 3, (10.0, 10.0), 10.0);
        let mut img = crate::rigsim::dot_grid_image((40, 40), &truth, 2.0, 200, 30);
        // a dark-in-luma blue stripe between the first two columns
        for y in 0..40 {
            for x in 14..16 {
                img.set(y, x, 0, 20);
                img.set(y, x, 1, 20);
                img.set(y, x, 2, 230);
            }
        }
        let found = detect_markers(&img, (3, 3), &Roi::full(&img), &DetectParams::default()).unwrap();
        assert_eq!(found.len(), 9);
    }
}
