//! Small residual U-Net noise predictor.
//!
//! The condition is concatenated with the noisy image at the input. The noise
//! level `sqrt(1 - gamma_bar)` goes through a sinusoidal embedding and a
//! two-layer MLP, and is added per channel inside every residual block.
//! Downsampling is 2x2 mean pooling, upsampling is nearest neighbour.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::denoiser::{Architecture, Denoiser, COND_CHANNELS, IMAGE_CHANNELS};
use crate::diffusion::nn::{
    avg_pool2, avg_pool2_backward, silu, silu_backward, silu_grad, silu_tensor, sinusoidal_embedding, upsample2,
    upsample2_backward, Conv2d, ConvCache, Layout, Linear,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Scale applied to the noise standard deviation before the sinusoidal embedding.
const LEVEL_SCALE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UNetConfig {
    pub base_channels: usize,
    /// Channel multiplier per resolution level; its length is the level count.
    pub channel_mults: Vec<usize>,
    /// Width of the sinusoidal noise-level embedding.
    pub embed_dim: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self { base_channels: 32, channel_mults: vec![1, 2, 2], embed_dim: 32 }
    }
}

impl UNetConfig {
    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::param("base_channels", "must be positive"));
        }
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return Err(Error::param("channel_mults", "need at least one level, all multipliers positive"));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::param("embed_dim", "must be a positive even number"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    skip: Option<Conv2d>,
    level_proj: Linear,
}

struct ResCache<F> {
    input: Tensor<F>,
    conv1: ConvCache<F>,
    hidden: Tensor<F>,
    conv2: ConvCache<F>,
    skip: Option<ConvCache<F>>,
}

impl ResBlock {
    fn new(layout: &mut Layout, cin: usize, cout: usize, temb: usize) -> Self {
        Self {
            conv1: Conv2d::new(layout, cin, cout, 3),
            conv2: Conv2d::new(layout, cout, cout, 3),
            skip: (cin != cout).then(|| Conv2d::new(layout, cin, cout, 1)),
            level_proj: Linear::new(layout, temb, cout),
        }
    }

    fn init<F: Scalar>(&self, p: &mut [F], rng: &mut ChaCha8Rng) {
        self.conv1.init(p, 1.0, rng);
        self.conv2.init(p, 0.2, rng);
        if let Some(s) = &self.skip {
            s.init(p, 0.5, rng);
        }
        self.level_proj.init(p, 1.0, rng);
    }

    fn forward<F: Scalar>(&self, p: &[F], x: &Tensor<F>, temb: &[F]) -> (Tensor<F>, ResCache<F>) {
        let (mut hidden, conv1) = self.conv1.forward(p, &silu_tensor(x));
        let shift = self.level_proj.forward(p, temb);
        for (c, &s) in shift.iter().enumerate() {
            for v in hidden.channel_mut(c) {
                *v += s;
            }
        }
        let (mut out, conv2) = self.conv2.forward(p, &silu_tensor(&hidden));
        let skip = match &self.skip {
            Some(s) => {
                let (y, cache) = s.forward(p, x);
                out.add_assign(&y);
                Some(cache)
            }
            None => {
                out.add_assign(x);
                None
            }
        };
        (out, ResCache { input: x.clone(), conv1, hidden, conv2, skip })
    }

    /// Returns the input gradient; adds the embedding gradient into `d_temb`.
    fn backward<F: Scalar>(&self, p: &[F], g: &mut [F], cache: &ResCache<F>, temb: &[F], d_temb: &mut [F], dy: &Tensor<F>) -> Tensor<F> {
        let d_act2 = self.conv2.backward(p, g, &cache.conv2, dy);
        let d_hidden = silu_backward(&cache.hidden, &d_act2);
        let d_shift: Vec<F> = (0..d_hidden.channels()).map(|c| d_hidden.channel(c).iter().copied().sum()).collect();
        let dt = self.level_proj.backward(p, g, temb, &d_shift);
        for (a, b) in d_temb.iter_mut().zip(dt) {
            *a += b;
        }
        let d_act1 = self.conv1.backward(p, g, &cache.conv1, &d_hidden);
        let mut dx = silu_backward(&cache.input, &d_act1);
        match (&self.skip, &cache.skip) {
            (Some(s), Some(sc)) => dx.add_assign(&s.backward(p, g, sc, dy)),
            _ => dx.add_assign(dy),
        }
        dx
    }
}

#[derive(Clone, Debug)]
pub struct UNet<F> {
    config: UNetConfig,
    level_in: Linear,
    level_hidden: Linear,
    conv_in: Conv2d,
    down: Vec<ResBlock>,
    mid: ResBlock,
    up: Vec<ResBlock>,
    conv_out: Conv2d,
    params: Vec<F>,
}

pub struct UNetCache<F> {
    level_features: Vec<F>,
    level_pre1: Vec<F>,
    level_pre2: Vec<F>,
    temb: Vec<F>,
    conv_in: ConvCache<F>,
    down: Vec<ResCache<F>>,
    skip_channels: Vec<usize>,
    mid: ResCache<F>,
    up: Vec<ResCache<F>>,
    pre_out: Tensor<F>,
    conv_out: ConvCache<F>,
}

impl<F: Scalar> UNet<F> {
    /// Builds the network with seeded initialization. The output convolution
    /// starts at zero so an untrained model predicts no noise.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut layout = Layout::default();
        let temb = 4 * config.base_channels;
        let level_in = Linear::new(&mut layout, config.embed_dim, temb);
        let level_hidden = Linear::new(&mut layout, temb, temb);
        let widths: Vec<usize> = config.channel_mults.iter().map(|m| m * config.base_channels).collect();
        let conv_in = Conv2d::new(&mut layout, COND_CHANNELS + IMAGE_CHANNELS, widths[0], 3);
        let mut down = Vec::new();
        let mut prev = widths[0];
        for &w in &widths {
            down.push(ResBlock::new(&mut layout, prev, w, temb));
            prev = w;
        }
        let mid = ResBlock::new(&mut layout, prev, prev, temb);
        let mut up = Vec::new();
        for &w in widths.iter().rev() {
            up.push(ResBlock::new(&mut layout, prev + w, w, temb));
            prev = w;
        }
        let conv_out = Conv2d::new(&mut layout, widths[0], IMAGE_CHANNELS, 3);

        let mut params = vec![F::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        level_in.init(&mut params, 1.0, &mut rng);
        level_hidden.init(&mut params, 1.0, &mut rng);
        conv_in.init(&mut params, 1.0, &mut rng);
        for b in down.iter().chain(std::iter::once(&mid)).chain(&up) {
            b.init(&mut params, &mut rng);
        }
        // conv_out stays zero
        Ok(Self { config, level_in, level_hidden, conv_in, down, mid, up, conv_out, params })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }
}

impl<F: Scalar> Denoiser<F> for UNet<F> {
    type Cache = UNetCache<F>;

    fn architecture(&self) -> Architecture {
        Architecture::Unet(self.config.clone())
    }

    fn params(&self) -> &[F] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let div = 1 << (self.config.levels() - 1);
        if height % div != 0 || width % div != 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "{}-level U-Net needs spatial size divisible by {div}, got {height}x{width}",
                self.config.levels()
            )));
        }
        Ok(())
    }

    fn forward(&self, cond: &Tensor<F>, noisy: &Tensor<F>, gamma_bar: f64) -> (Tensor<F>, Self::Cache) {
        let p = &self.params;
        let level = LEVEL_SCALE * (1.0 - gamma_bar).max(0.0).sqrt();
        let level_features = sinusoidal_embedding::<F>(level, self.config.embed_dim);
        let level_pre1 = self.level_in.forward(p, &level_features);
        let act1: Vec<F> = level_pre1.iter().map(|&v| silu(v)).collect();
        let level_pre2 = self.level_hidden.forward(p, &act1);
        let temb: Vec<F> = level_pre2.iter().map(|&v| silu(v)).collect();

        let input = Tensor::concat(&[cond, noisy]);
        let (mut h, conv_in) = self.conv_in.forward(p, &input);
        let levels = self.down.len();
        let mut skips = Vec::with_capacity(levels);
        let mut down = Vec::with_capacity(levels);
        for (i, block) in self.down.iter().enumerate() {
            let (y, c) = block.forward(p, &h, &temb);
            down.push(c);
            h = if i + 1 < levels { avg_pool2(&y) } else { y.clone() };
            skips.push(y);
        }
        let (mut h, mid) = self.mid.forward(p, &h, &temb);
        let mut up = Vec::with_capacity(levels);
        let mut skip_channels = Vec::with_capacity(levels);
        for (j, block) in self.up.iter().enumerate() {
            let skip = skips.pop().expect("one skip per level");
            skip_channels.push(skip.channels());
            let (y, c) = block.forward(p, &Tensor::concat(&[&h, &skip]), &temb);
            up.push(c);
            h = if j + 1 < levels { upsample2(&y) } else { y };
        }
        let (out, conv_out) = self.conv_out.forward(p, &silu_tensor(&h));
        let cache = UNetCache {
            level_features,
            level_pre1,
            level_pre2,
            temb,
            conv_in,
            down,
            skip_channels,
            mid,
            up,
            pre_out: h,
            conv_out,
        };
        (out, cache)
    }

    fn backward(&self, cache: Self::Cache, grad_out: &Tensor<F>, g: &mut [F]) {
        let p = &self.params;
        let levels = self.down.len();
        let mut d_temb = vec![F::zero(); cache.temb.len()];

        let d_act = self.conv_out.backward(p, g, &cache.conv_out, grad_out);
        let mut dh = silu_backward(&cache.pre_out, &d_act);

        // up path in reverse; d_skips[i] collects the gradient for down level i
        let mut d_skips: Vec<Option<Tensor<F>>> = (0..levels).map(|_| None).collect();
        for j in (0..levels).rev() {
            if j + 1 < levels {
                dh = upsample2_backward(&dh);
            }
            let d_cat = self.up[j].backward(p, g, &cache.up[j], &cache.temb, &mut d_temb, &dh);
            let skip_c = cache.skip_channels[j];
            let (d_h, d_skip) = d_cat.split_channels(d_cat.channels() - skip_c);
            d_skips[levels - 1 - j] = Some(d_skip);
            dh = d_h;
        }
        dh = self.mid.backward(p, g, &cache.mid, &cache.temb, &mut d_temb, &dh);

        for i in (0..levels).rev() {
            let mut dy = if i + 1 < levels { avg_pool2_backward(&dh) } else { dh };
            dy.add_assign(d_skips[i].as_ref().expect("skip gradient"));
            dh = self.down[i].backward(p, g, &cache.down[i], &cache.temb, &mut d_temb, &dy);
        }
        self.conv_in.backward(p, g, &cache.conv_in, &dh);

        let d_pre2: Vec<F> = d_temb.iter().zip(&cache.level_pre2).map(|(&d, &x)| d * silu_grad(x)).collect();
        let act1: Vec<F> = cache.level_pre1.iter().map(|&v| silu(v)).collect();
        let d_act1 = self.level_hidden.backward(p, g, &act1, &d_pre2);
        let d_pre1: Vec<F> = d_act1.iter().zip(&cache.level_pre1).map(|(&d, &x)| d * silu_grad(x)).collect();
        self.level_in.backward(p, g, &cache.level_features, &d_pre1);
    }
}
