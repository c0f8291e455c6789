//! Contact-condition encoding.
//!
//! The six-axis force is expanded into a single `(1, H, W)` plane and stacked
//! under the normalized object image, giving the 4-channel condition the
//! denoiser sees next to the noisy tactile image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ForceVector;
use crate::error::{Error, Result};
use crate::image::{normalize, Image};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Number of force/torque axes, and therefore bands in the banded plane.
pub const AXES: usize = 6;

/// Closed interval an axis is normalized against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for AxisRange {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<AxisRange> for [f64; 2] {
    fn from(r: AxisRange) -> Self {
        [r.min, r.max]
    }
}

/// Per-axis bounds: forces in N, torques in N·mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationRanges {
    pub fx: AxisRange,
    pub fy: AxisRange,
    pub fz: AxisRange,
    pub mx: AxisRange,
    pub my: AxisRange,
    pub mz: AxisRange,
}

impl Default for CalibrationRanges {
    /// Bounds that cover every reading the default rig simulator produces.
    fn default() -> Self {
        Self::from_array([[-8.0, 8.0], [-8.0, 8.0], [-1.0, 30.0], [-120.0, 120.0], [-120.0, 120.0], [-40.0, 40.0]])
    }
}

impl CalibrationRanges {
    pub fn from_array(a: [[f64; 2]; AXES]) -> Self {
        Self {
            fx: a[0].into(),
            fy: a[1].into(),
            fz: a[2].into(),
            mx: a[3].into(),
            my: a[4].into(),
            mz: a[5].into(),
        }
    }

    /// Same interval on every axis.
    pub fn uniform(min: f64, max: f64) -> Self {
        Self::from_array([[min, max]; AXES])
    }

    pub fn axes(&self) -> [AxisRange; AXES] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in ForceVector::AXES.iter().zip(self.axes()) {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(Error::Validation(format!(
                    "calibration range for {name} must satisfy min < max, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        Ok(())
    }

    /// Maps each component to `[-1, 1]`; out-of-range components are errors.
    pub fn normalize(&self, f: &ForceVector) -> Result<[f64; AXES]> {
        self.validate()?;
        let mut out = [0.0; AXES];
        for (k, (v, r)) in f.to_array().into_iter().zip(self.axes()).enumerate() {
            if !(v >= r.min && v <= r.max) {
                return Err(Error::Calibration { axis: ForceVector::AXES[k], value: v, min: r.min, max: r.max });
            }
            out[k] = 2.0 * (v - r.min) / (r.max - r.min) - 1.0;
        }
        Ok(out)
    }
}

/// How the force vector is spread over the condition plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// Horizontal band per axis, filled with that axis's normalized value.
    #[default]
    Banded,
    /// `sin(w·f + b)` per pixel with seeded random `w`, `b`.
    Projected,
}

/// Everything needed to reproduce a force encoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceEncoding {
    pub mode: EncodingMode,
    pub seed: u64,
    pub ranges: CalibrationRanges,
}

impl Default for ForceEncoding {
    fn default() -> Self {
        Self { mode: EncodingMode::Banded, seed: 0, ranges: CalibrationRanges::default() }
    }
}

/// `(1, H, W)` force plane with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionPlane<F>(pub Tensor<F>);

/// `(4, H, W)` condition: normalized RGB object image followed by the force plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionTensor<F>(pub Tensor<F>);

impl<F: Scalar> ConditionTensor<F> {
    pub const CHANNELS: usize = 4;

    pub fn tensor(&self) -> &Tensor<F> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<F> {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

/// Row range `[start, end)` of band `k` for a plane of `height` rows.
/// The last band absorbs the remainder when `height` is not a multiple of six.
pub fn band_rows(k: usize, height: usize) -> (usize, usize) {
    let band = height / AXES;
    let start = k * band;
    let end = if k + 1 == AXES { height } else { start + band };
    (start, end)
}

/// Expands a force reading into a fixed-size plane.
pub fn hash_expand<F: Scalar>(
    f: &ForceVector,
    ranges: &CalibrationRanges,
    (height, width): (usize, usize),
    mode: EncodingMode,
    seed: u64,
) -> Result<ConditionPlane<F>> {
    if height < AXES || width == 0 {
        return Err(Error::Shape(format!("condition plane {height}x{width} needs at least {AXES} rows")));
    }
    let unit = ranges.normalize(f)?;
    let mut plane = Tensor::zeros(1, height, width);
    match mode {
        EncodingMode::Banded => {
            for (k, &v) in unit.iter().enumerate() {
                let (r0, r1) = band_rows(k, height);
                plane.data_mut()[r0 * width..r1 * width].fill(F::lit(v));
            }
        }
        EncodingMode::Projected => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for px in plane.data_mut() {
                let mut acc = 0.0;
                for &v in &unit {
                    let w: f64 = rng.sample(StandardNormal);
                    acc += w * v;
                }
                let bias = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                *px = F::lit((acc + bias).sin());
            }
        }
    }
    Ok(ConditionPlane(plane))
}

/// Builds `concat(normalize(image), hash_expand(force))`.
pub fn assemble_condition<F: Scalar>(
    image: &Image,
    force: &ForceVector,
    encoding: &ForceEncoding,
) -> Result<ConditionTensor<F>> {
    if image.channels() != 3 {
        return Err(Error::Shape(format!("object image must have 3 channels, got {}", image.channels())));
    }
    let rgb = normalize::<F>(image);
    let plane = hash_expand::<F>(force, &encoding.ranges, (image.height(), image.width()), encoding.mode, encoding.seed)?;
    Ok(ConditionTensor(Tensor::concat(&[&rgb, &plane.0])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ranges() -> CalibrationRanges {
        CalibrationRanges::uniform(-1.0, 1.0)
    }

    #[test]
    fn midpoint_force_gives_zero_plane() {
        let r = CalibrationRanges::from_array([[-4.0, 4.0], [-2.0, 6.0], [0.0, 10.0], [-1.0, 1.0], [5.0, 7.0], [-3.0, 3.0]]);
        let mid = ForceVector::new(0.0, 2.0, 5.0, 0.0, 6.0, 0.0);
        let p = hash_expand::<f64>(&mid, &r, (12, 5), EncodingMode::Banded, 0).unwrap();
        assert!(p.0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_fx_fills_first_band() {
        let f = ForceVector::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let p = hash_expand::<f64>(&f, &unit_ranges(), (12, 3), EncodingMode::Banded, 0).unwrap();
        for y in 0..12 {
            for x in 0..3 {
                assert_eq!(p.0.get(0, y, x), if y < 2 { 1.0 } else { 0.0 }, "row {y}");
            }
        }
    }

    #[test]
    fn last_band_absorbs_remainder() {
        assert_eq!(band_rows(0, 32), (0, 5));
        assert_eq!(band_rows(4, 32), (20, 25));
        assert_eq!(band_rows(5, 32), (25, 32));
        assert_eq!(band_rows(5, 12), (10, 12));
    }

    #[test]
    fn plane_shape_matches_requested_size() {
        let f = ForceVector::new(0.3, -0.2, 0.9, 0.0, 0.1, -1.0);
        for mode in [EncodingMode::Banded, EncodingMode::Projected] {
            let p = hash_expand::<f32>(&f, &unit_ranges(), (256, 256), mode, 11).unwrap();
            assert_eq!(p.0.shape(), (1, 256, 256));
            assert!(p.0.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn out_of_range_names_the_axis() {
        let f = ForceVector::new(0.0, 0.0, 0.0, 0.0, 1.5, 0.0);
        match hash_expand::<f32>(&f, &unit_ranges(), (12, 12), EncodingMode::Banded, 0) {
            Err(Error::Calibration { axis, .. }) => assert_eq!(axis, "my"),
            other => panic!("expected calibration error, got {other:?}"),
        }
        let nan = ForceVector::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(hash_expand::<f32>(&nan, &unit_ranges(), (12, 12), EncodingMode::Banded, 0).is_err());
    }

    #[test]
    fn projected_mode_depends_on_seed_only_through_rng() {
        let f = ForceVector::new(0.3, -0.2, 0.9, 0.0, 0.1, -1.0);
        let a = hash_expand::<f64>(&f, &unit_ranges(), (8, 8), EncodingMode::Projected, 5).unwrap();
        let b = hash_expand::<f64>(&f, &unit_ranges(), (8, 8), EncodingMode::Projected, 5).unwrap();
        let c = hash_expand::<f64>(&f, &unit_ranges(), (8, 8), EncodingMode::Projected, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn assembled_condition_has_four_channels() {
        let img = Image::from_fn(256, 256, 3, |y, x, c| ((y + x + c) % 256) as u8);
        let f = ForceVector::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
        let enc = ForceEncoding { ranges: unit_ranges(), ..Default::default() };
        let x = assemble_condition::<f32>(&img, &f, &enc).unwrap();
        assert_eq!(x.0.shape(), (4, 256, 256));
        assert_eq!(x.0.channel(0), normalize::<f32>(&img).channel(0));
        let again = assemble_condition::<f32>(&img, &f, &enc).unwrap();
        assert_eq!(x, again);
    }

    #[test]
    fn fz_change_only_touches_band_two_of_force_channel() {
        let img = Image::from_fn(12, 4, 3, |y, x, _| (y * 10 + x) as u8);
        let enc = ForceEncoding { ranges: unit_ranges(), ..Default::default() };
        let a = assemble_condition::<f64>(&img, &ForceVector::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6), &enc).unwrap();
        let b = assemble_condition::<f64>(&img, &ForceVector::new(0.1, 0.2, -0.7, 0.4, 0.5, 0.6), &enc).unwrap();
        for c in 0..4 {
            for y in 0..12 {
                for x in 0..4 {
                    let differs = a.0.get(c, y, x) != b.0.get(c, y, x);
                    assert_eq!(differs, c == 3 && (4..6).contains(&y), "c={c} y={y}");
                }
            }
        }
    }

    #[test]
    fn grayscale_object_image_is_a_shape_error() {
        let img = Image::filled(12, 12, 1, 9);
        let r = assemble_condition::<f32>(&img, &ForceVector::default(), &ForceEncoding::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
