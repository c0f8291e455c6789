//! Minimal layers with hand-written backward passes.
//!
//! Parameters live in one flat buffer; each layer owns [`Slot`]s into it so the
//! optimizer, checkpoints and finite-difference checks all see a single vector.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    offset: usize,
    len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a, F>(&self, p: &'a [F]) -> &'a [F] {
        &p[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a, F>(&self, p: &'a mut [F]) -> &'a mut [F] {
        &mut p[self.offset..self.offset + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Hands out consecutive slots while a network is being laid out.
#[derive(Debug, Default)]
pub struct Layout {
    total: usize,
}

impl Layout {
    pub fn alloc(&mut self, len: usize) -> Slot {
        let s = Slot { offset: self.total, len };
        self.total += len;
        s
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Fills a slot with `N(0, std^2)`.
pub fn init_normal<F: Scalar, R: Rng + ?Sized>(p: &mut [F], slot: Slot, std: f64, rng: &mut R) {
    for v in slot.of_mut(p) {
        *v = F::lit(std * rng.sample::<f64, _>(StandardNormal));
    }
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
pub fn silu<F: Scalar>(x: F) -> F {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<F: Scalar>(x: F) -> F {
    let s = sigmoid(x);
    s * (F::one() + x * (F::one() - s))
}

pub fn silu_tensor<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(silu)
}

/// `dx = dy * silu'(x)`.
pub fn silu_backward<F: Scalar>(x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    x.zip_map(dy, |x, g| g * silu_grad(x))
}

/// 2-D convolution, stride 1, "same" zero padding, odd square kernel.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub weight: Slot,
    pub bias: Slot,
}

/// Saved input columns of a convolution.
pub struct ConvCache<F> {
    cols: Vec<F>,
    height: usize,
    width: usize,
}

impl Conv2d {
    pub fn new(layout: &mut Layout, cin: usize, cout: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Self {
            cin,
            cout,
            kernel,
            weight: layout.alloc(cout * cin * kernel * kernel),
            bias: layout.alloc(cout),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    /// He-normal weights scaled by `gain`, zero bias.
    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, p: &mut [F], gain: f64, rng: &mut R) {
        init_normal(p, self.weight, gain * (2.0 / self.fan_in() as f64).sqrt(), rng);
        self.bias.of_mut(p).fill(F::zero());
    }

    fn im2col<F: Scalar>(&self, x: &Tensor<F>) -> Vec<F> {
        let (c, h, w) = x.shape();
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        let mut cols = vec![F::zero(); c * k * k * hw];
        for ci in 0..c {
            let src = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        let sx0 = x0 + kx - pad;
                        row[y * w + x0..y * w + x1].copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                    }
                }
            }
        }
        cols
    }

    fn col2im<F: Scalar>(&self, cols: &[F], h: usize, w: usize) -> Tensor<F> {
        let k = self.kernel;
        let pad = k / 2;
        let hw = h * w;
        let mut dx = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let dst = dx.channel_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let x0 = pad.saturating_sub(kx);
                        let x1 = (w + pad - kx).min(w);
                        let sx0 = x0 + kx - pad;
                        for (d, &g) in dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                            *d += g;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward<F: Scalar>(&self, p: &[F], x: &Tensor<F>) -> (Tensor<F>, ConvCache<F>) {
        let (c, h, w) = x.shape();
        assert_eq!(c, self.cin, "conv input channels");
        let hw = h * w;
        let kk = self.fan_in();
        let cols = if self.kernel == 1 { x.data().to_vec() } else { self.im2col(x) };
        let mut out = Tensor::zeros(self.cout, h, w);
        let bias = self.bias.of(p);
        for (co, &b) in bias.iter().enumerate() {
            out.channel_mut(co).fill(b);
        }
        F::gemm(
            self.cout,
            kk,
            hw,
            F::one(),
            self.weight.of(p),
            (kk as isize, 1),
            &cols,
            (hw as isize, 1),
            F::one(),
            out.data_mut(),
            (hw as isize, 1),
        );
        (out, ConvCache { cols, height: h, width: w })
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    pub fn backward<F: Scalar>(&self, p: &[F], g: &mut [F], cache: &ConvCache<F>, dy: &Tensor<F>) -> Tensor<F> {
        let (h, w) = (cache.height, cache.width);
        let hw = h * w;
        let kk = self.fan_in();
        assert_eq!(dy.shape(), (self.cout, h, w));
        F::gemm(
            self.cout,
            hw,
            kk,
            F::one(),
            dy.data(),
            (hw as isize, 1),
            &cache.cols,
            (1, hw as isize),
            F::one(),
            self.weight.of_mut(g),
            (kk as isize, 1),
        );
        for (co, db) in self.bias.of_mut(g).iter_mut().enumerate() {
            *db += dy.channel(co).iter().copied().sum::<F>();
        }
        let mut dcols = vec![F::zero(); kk * hw];
        F::gemm(
            kk,
            self.cout,
            hw,
            F::one(),
            self.weight.of(p),
            (1, kk as isize),
            dy.data(),
            (hw as isize, 1),
            F::zero(),
            &mut dcols,
            (hw as isize, 1),
        );
        if self.kernel == 1 {
            Tensor::from_vec(self.cin, h, w, dcols)
        } else {
            self.col2im(&dcols, h, w)
        }
    }
}

/// Dense layer on vectors.
#[derive(Clone, Debug)]
pub struct Linear {
    pub fin: usize,
    pub fout: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Linear {
    pub fn new(layout: &mut Layout, fin: usize, fout: usize) -> Self {
        Self { fin, fout, weight: layout.alloc(fin * fout), bias: layout.alloc(fout) }
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, p: &mut [F], gain: f64, rng: &mut R) {
        init_normal(p, self.weight, gain * (1.0 / self.fin as f64).sqrt(), rng);
        self.bias.of_mut(p).fill(F::zero());
    }

    pub fn forward<F: Scalar>(&self, p: &[F], x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.fin);
        let w = self.weight.of(p);
        self.bias
            .of(p)
            .iter()
            .enumerate()
            .map(|(o, &b)| b + w[o * self.fin..(o + 1) * self.fin].iter().zip(x).map(|(&a, &v)| a * v).sum::<F>())
            .collect()
    }

    pub fn backward<F: Scalar>(&self, p: &[F], g: &mut [F], x: &[F], dy: &[F]) -> Vec<F> {
        let gw = self.weight.of_mut(g);
        for (o, &d) in dy.iter().enumerate() {
            for (gv, &v) in gw[o * self.fin..(o + 1) * self.fin].iter_mut().zip(x) {
                *gv += d * v;
            }
        }
        for (gb, &d) in self.bias.of_mut(g).iter_mut().zip(dy) {
            *gb += d;
        }
        let w = self.weight.of(p);
        let mut dx = vec![F::zero(); self.fin];
        for (o, &d) in dy.iter().enumerate() {
            for (dv, &a) in dx.iter_mut().zip(&w[o * self.fin..(o + 1) * self.fin]) {
                *dv += d * a;
            }
        }
        dx
    }
}

/// 2x2 mean pooling; spatial dims must be even.
pub fn avg_pool2<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let (c, h, w) = x.shape();
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial size, got {h}x{w}");
    let quarter = F::lit(0.25);
    let mut out = Tensor::zeros(c, h / 2, w / 2);
    for ci in 0..c {
        for y in 0..h / 2 {
            for x_ in 0..w / 2 {
                let s = x.get(ci, 2 * y, 2 * x_) + x.get(ci, 2 * y + 1, 2 * x_) + x.get(ci, 2 * y, 2 * x_ + 1) + x.get(ci, 2 * y + 1, 2 * x_ + 1);
                out.set(ci, y, x_, s * quarter);
            }
        }
    }
    out
}

pub fn avg_pool2_backward<F: Scalar>(dy: &Tensor<F>) -> Tensor<F> {
    let (c, h, w) = dy.shape();
    let quarter = F::lit(0.25);
    let mut dx = Tensor::zeros(c, 2 * h, 2 * w);
    for ci in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                dx.set(ci, y, x, dy.get(ci, y / 2, x / 2) * quarter);
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let (c, h, w) = x.shape();
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    for ci in 0..c {
        for y in 0..2 * h {
            for x_ in 0..2 * w {
                out.set(ci, y, x_, x.get(ci, y / 2, x_ / 2));
            }
        }
    }
    out
}

pub fn upsample2_backward<F: Scalar>(dy: &Tensor<F>) -> Tensor<F> {
    let (c, h, w) = dy.shape();
    let mut dx = Tensor::zeros(c, h / 2, w / 2);
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = dx.get(ci, y / 2, x / 2) + dy.get(ci, y, x);
                dx.set(ci, y / 2, x / 2, v);
            }
        }
    }
    dx
}

/// Sinusoidal features of a scalar; `dim` must be even.
pub fn sinusoidal_embedding<F: Scalar>(value: f64, dim: usize) -> Vec<F> {
    let half = dim / 2;
    let mut out = vec![F::zero(); dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        out[i] = F::lit((value * freq).sin());
        out[half + i] = F::lit((value * freq).cos());
    }
    out
}
