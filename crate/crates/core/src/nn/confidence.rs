use super::coarse::EncoderDecoder;
use super::layers;
use super::params::{BoundParams, Initializer, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Var;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceNetConfig {
    /// RGB image (3) + warped thermal image (1) + both depths (1 + 1).
    pub in_channels: usize,
    pub base_channels: usize,
    pub levels: usize,
    /// Depth inputs are divided by this before entering the network.
    pub depth_scale: f64,
}

impl Default for ConfidenceNetConfig {
    fn default() -> Self {
        ConfidenceNetConfig {
            in_channels: 6,
            base_channels: 8,
            levels: 2,
            depth_scale: 25.0,
        }
    }
}

/// RGB and thermal confidence maps; `c_thr = 1 − c_rgb` pixelwise.
#[derive(Clone, Copy, Debug)]
pub struct ConfidencePair<'t> {
    pub c_rgb: Var<'t>,
    pub c_thr: Var<'t>,
}

/// Predicts how much to trust the RGB depth at each pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfidenceNet {
    pub cfg: ConfidenceNetConfig,
}

impl ConfidenceNet {
    pub fn new(cfg: ConfidenceNetConfig) -> Result<Self> {
        if cfg.in_channels != 6 {
            return Err(Error::invalid(format!(
                "confidence net takes 6 input channels, got {}",
                cfg.in_channels
            )));
        }
        if cfg.base_channels == 0 || cfg.levels == 0 || !(cfg.depth_scale > 0.0) {
            return Err(Error::invalid("confidence net config must be positive"));
        }
        Ok(ConfidenceNet { cfg })
    }

    fn body(&self) -> EncoderDecoder {
        EncoderDecoder {
            in_channels: self.cfg.in_channels,
            base_channels: self.cfg.base_channels,
            levels: self.cfg.levels,
        }
    }

    pub fn init(&self, seed: u64) -> Result<NetworkParams> {
        let mut init = Initializer::new(seed);
        self.body().init(&mut init)?;
        Ok(init.finish())
    }

    /// All inputs live in the RGB view. Depth inputs are detached here.
    /// Where the warped thermal depth is a hole (`thr_valid` false) the RGB
    /// confidence is forced to exactly 1.
    pub fn forward<'t>(
        &self,
        p: &BoundParams<'t>,
        i_rgb: &Var<'t>,
        i_thr_warped: &Var<'t>,
        d_rgb: &Var<'t>,
        d_thr_warped: &Var<'t>,
        thr_valid: &[bool],
    ) -> Result<ConfidencePair<'t>> {
        let (h, w) = layers::spatial(i_rgb)?;
        for (x, c, what) in [
            (i_rgb, 3, "rgb image"),
            (i_thr_warped, 1, "warped thermal image"),
            (d_rgb, 1, "rgb depth"),
            (d_thr_warped, 1, "warped thermal depth"),
        ] {
            layers::expect_channels(x, c, what)?;
            if layers::spatial(x)? != (h, w) {
                return Err(Error::shape(format!(
                    "{what} extent differs from rgb image"
                )));
            }
        }
        let inv = 1.0 / self.cfg.depth_scale;
        let x = i_rgb.tape().concat(
            &[
                *i_rgb,
                *i_thr_warped,
                d_rgb.detach().scale(inv),
                d_thr_warped.detach().scale(inv),
            ],
            0,
        )?;
        let raw = self.body().forward(p, &x)?.sigmoid();
        let m = layers::mask_var(i_rgb.tape(), thr_valid, (h, w))?;
        // c = raw·m + (1 − m)
        let c_rgb = raw.mul(&m)?.add(&m.affine(-1.0, 1.0))?;
        let c_thr = c_rgb.affine(-1.0, 1.0);
        Ok(ConfidencePair { c_rgb, c_thr })
    }
}
