use super::layers::{self, conv, conv_act};
use super::params::{BoundParams, Initializer, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Channels at encoder level `l`: doubling per level, capped at 4× base.
fn level_channels(base: usize, l: usize) -> usize {
    base << l.min(2)
}

/// Tiny U-shaped encoder-decoder: strided 3×3 convs down, bilinear upsample
/// plus skip concatenation and a 3×3 conv up, then a 3×3 single-channel head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct EncoderDecoder {
    pub in_channels: usize,
    pub base_channels: usize,
    pub levels: usize,
}

impl EncoderDecoder {
    pub fn init(&self, init: &mut Initializer) -> Result<()> {
        let ch = |l| level_channels(self.base_channels, l);
        init.conv("stem", ch(0), self.in_channels, 3)?;
        for l in 1..=self.levels {
            init.conv(&format!("down{l}"), ch(l), ch(l - 1), 3)?;
        }
        for l in (0..self.levels).rev() {
            init.conv(&format!("up{l}"), ch(l), ch(l + 1) + ch(l), 3)?;
        }
        init.conv("head", 1, ch(0), 3)
    }

    pub fn check_input(&self, x: &Var<'_>) -> Result<(usize, usize)> {
        layers::expect_channels(x, self.in_channels, "encoder-decoder input")?;
        let (h, w) = layers::spatial(x)?;
        let f = 1 << self.levels;
        if h % f != 0 || w % f != 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} not divisible by 2^{} = {f}",
                self.levels
            )));
        }
        Ok((h, w))
    }

    /// Head logits `[1, H, W]`.
    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        self.check_input(x)?;
        let mut skips = vec![conv_act(p, "stem", x, 1)?];
        for l in 1..=self.levels {
            let prev = skips.last().expect("stem pushed");
            skips.push(conv_act(p, &format!("down{l}"), prev, 2)?);
        }
        let mut y = skips.pop().expect("bottleneck");
        for l in (0..self.levels).rev() {
            let skip = &skips[l];
            let (h, w) = layers::spatial(skip)?;
            let up = y.resize_bilinear(h, w)?;
            let cat = x.tape().concat(&[up, *skip], 0)?;
            y = conv_act(p, &format!("up{l}"), &cat, 1)?;
        }
        conv(p, "head", &y, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseDepthNetConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub levels: usize,
}

impl CoarseDepthNetConfig {
    pub fn rgb() -> Self {
        CoarseDepthNetConfig {
            in_channels: 3,
            ..Self::default()
        }
    }

    pub fn thermal() -> Self {
        CoarseDepthNetConfig {
            in_channels: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_max > self.d_min) {
            return Err(Error::invalid(format!(
                "depth range ({}, {}) must satisfy 0 < d_min < d_max",
                self.d_min, self.d_max
            )));
        }
        if self.levels == 0 || self.in_channels == 0 || self.base_channels == 0 {
            return Err(Error::invalid(
                "levels, in_channels and base_channels must be >= 1",
            ));
        }
        Ok(())
    }

    fn body(&self) -> EncoderDecoder {
        EncoderDecoder {
            in_channels: self.in_channels,
            base_channels: self.base_channels,
            levels: self.levels,
        }
    }
}

impl Default for CoarseDepthNetConfig {
    fn default() -> Self {
        CoarseDepthNetConfig {
            in_channels: 3,
            base_channels: 8,
            d_min: 1.0,
            d_max: 25.0,
            levels: 3,
        }
    }
}

/// Per-modality monocular depth network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseDepthNet {
    pub cfg: CoarseDepthNetConfig,
}

impl CoarseDepthNet {
    pub fn new(cfg: CoarseDepthNetConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(CoarseDepthNet { cfg })
    }

    pub fn init(&self, seed: u64) -> Result<NetworkParams> {
        let mut init = Initializer::new(seed);
        self.cfg.body().init(&mut init)?;
        Ok(init.finish())
    }

    /// Dense `[1, H, W]` depth in `(d_min, d_max)` from a `[C, H, W]` image.
    pub fn forward<'t>(&self, p: &BoundParams<'t>, image: &Var<'t>) -> Result<Var<'t>> {
        let logits = self.cfg.body().forward(p, image)?;
        Ok(layers::depth_range(&logits, self.cfg.d_min, self.cfg.d_max))
    }
}
