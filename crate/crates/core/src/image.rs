//! Storage-domain raster images and the pixel-domain normalization.
//!
//! Images are stored as interleaved 8-bit samples (row-major, channels last),
//! the same layout PNG uses. The model works in channel-major tensors with
//! values in `[-1, 1]`; [`normalize`] and [`denormalize`] convert between them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("images have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Self { height, width, channels, pixels })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self { height, width, channels, pixels: vec![value; height * width * channels] }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Self {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, pixels }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }

    /// Luma (BT.601 weights) as `f64`, row-major.
    pub fn to_gray(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&v| f64::from(v)).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
                .collect(),
        }
    }

    /// Brightest channel per pixel, row-major. Black ink stays dark here while
    /// saturated colour does not.
    pub fn to_value(&self) -> Vec<f64> {
        self.pixels.chunks_exact(self.channels).map(|p| f64::from(*p.iter().max().expect("non-empty pixel"))).collect()
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image { path: path.into(), message: e.to_string() })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color().channel_count() {
            1 | 2 => Image::new(h, w, 1, img.into_luma8().into_raw()),
            _ => Image::new(h, w, 3, img.into_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image { path: path.into(), message: e.to_string() })
    }
}

/// Maps one storage level in `[0, 255]` to the model domain: `v / 127.5 - 1`.
pub fn normalize_level<F: Scalar>(v: f64) -> Result<F> {
    if !(0.0..=255.0).contains(&v) {
        return Err(Error::Domain { value: v });
    }
    Ok(F::lit(v / 127.5 - 1.0))
}

/// Maps a model-domain value back to the nearest storage level, clamped.
pub fn denormalize_level<F: Scalar>(v: F) -> u8 {
    let s = (v.to_f64_lossy() + 1.0) * 127.5;
    if s.is_nan() {
        return 0;
    }
    s.round().clamp(0.0, 255.0) as u8
}

/// Storage image to a `(C, H, W)` model-domain tensor.
pub fn normalize<F: Scalar>(img: &Image) -> Tensor<F> {
    let (h, w, c) = (img.height, img.width, img.channels);
    let lut: Vec<F> = (0..=255u8).map(|v| F::lit(f64::from(v) / 127.5 - 1.0)).collect();
    let mut t = Tensor::zeros(c, h, w);
    let plane = h * w;
    let out = t.data_mut();
    for (i, px) in img.pixels.chunks_exact(c).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            out[ch * plane + i] = lut[v as usize];
        }
    }
    t
}

/// Model-domain tensor with 1 or 3 channels back to a storage image.
pub fn denormalize<F: Scalar>(t: &Tensor<F>) -> Result<Image> {
    let (c, h, w) = t.shape();
    let plane = h * w;
    let mut pixels = vec![0u8; c * plane];
    for ch in 0..c {
        for (i, &v) in t.channel(ch).iter().enumerate() {
            pixels[i * c + ch] = denormalize_level(v);
        }
    }
    Image::new(h, w, c, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_map_to_unit_interval() {
        assert_eq!(normalize_level::<f64>(0.0).unwrap(), -1.0);
        assert_eq!(normalize_level::<f64>(255.0).unwrap(), 1.0);
    }

    #[test]
    fn level_127_is_just_below_zero() {
        let v = normalize_level::<f64>(127.0).unwrap();
        assert!((v - (127.0 / 127.5 - 1.0)).abs() < 1e-15);
        assert!((v + 0.003_921_568_627_45).abs() < 1e-12);
        assert_eq!(denormalize_level(v), 127);
    }

    #[test]
    fn all_levels_round_trip_in_both_widths() {
        for v in 0..=255u8 {
            assert_eq!(denormalize_level(normalize_level::<f64>(f64::from(v)).unwrap()), v);
            assert_eq!(denormalize_level(normalize_level::<f32>(f64::from(v)).unwrap()), v);
        }
    }

    #[test]
    fn out_of_range_level_is_a_domain_error() {
        assert!(matches!(normalize_level::<f32>(256.0), Err(Error::Domain { .. })));
        assert!(matches!(normalize_level::<f32>(-0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn normalize_is_strictly_monotone() {
        let vals: Vec<f64> = (0..=255).map(|v| normalize_level::<f64>(f64::from(v)).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn denormalize_clamps() {
        assert_eq!(denormalize_level(3.0f32), 255);
        assert_eq!(denormalize_level(-7.0f64), 0);
        assert_eq!(denormalize_level(f64::NAN), 0);
    }

    #[test]
    fn image_tensor_round_trip_preserves_layout() {
        let img = Image::from_fn(3, 4, 3, |y, x, c| (y * 40 + x * 7 + c * 90) as u8);
        let t = normalize::<f32>(&img);
        assert_eq!(t.shape(), (3, 3, 4));
        assert_eq!(denormalize_level(t.get(2, 1, 3)), img.get(1, 3, 2));
        assert_eq!(denormalize(&t).unwrap(), img);
    }

    #[test]
    fn rejects_bad_channel_counts() {
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(2, 2, 3, vec![0; 11]).is_err());
    }
}
