//! Dense channel-major (C, H, W) tensors.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, F::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: F) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length does not match shape");
        Self { channels, height, width, data }
    }

    /// Unit Gaussian tensor.
    pub fn randn<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..channels * height * width)
            .map(|_| F::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { channels, height, width, data }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
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
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> F {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: F) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[F] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [F] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Channel-wise concatenation; spatial sizes must agree.
    pub fn concat(parts: &[&Tensor<F>]) -> Self {
        let (h, w) = (parts[0].height, parts[0].width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut channels = 0;
        for p in parts {
            assert_eq!((p.height, p.width), (h, w), "concat of tensors with different spatial size");
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Self { channels, height: h, width: w, data }
    }

    /// Splits off the first `c` channels.
    pub fn split_channels(&self, c: usize) -> (Self, Self) {
        let at = c * self.plane_len();
        (
            Self::from_vec(c, self.height, self.width, self.data[..at].to_vec()),
            Self::from_vec(self.channels - c, self.height, self.width, self.data[at..].to_vec()),
        )
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn mean(&self) -> F {
        self.data.iter().copied().sum::<F>() / F::lit(self.data.len() as f64)
    }

    pub fn mean_squared_diff(&self, other: &Self) -> F {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b) * (a - b)).sum::<F>()
            / F::lit(self.data.len() as f64)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp(&self, lo: F, hi: F) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| G::lit(v.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor::<f64>::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f64>::from_vec(2, 2, 2, (0..8).map(f64::from).collect());
        let c = Tensor::concat(&[&a, &b]);
        assert_eq!(c.shape(), (3, 2, 2));
        assert_eq!(c.get(1, 0, 1), 1.0);
        let (a2, b2) = c.split_channels(1);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    #[should_panic]
    fn concat_rejects_mismatched_planes() {
        let a = Tensor::<f32>::zeros(1, 2, 2);
        let b = Tensor::<f32>::zeros(1, 3, 2);
        let _ = Tensor::concat(&[&a, &b]);
    }
}
