//! Dual-branch fusion network with cross-modal multi-head attention.
//!
//! Each branch turns an image and its depth into confidence-weighted
//! features `F = FFN(conv(cat(I, D)) · C)`. The attention stage lets each
//! modality query the other: queries and keys come from one branch, values
//! from the opposite one. The attended features are added back onto the
//! branch features, concatenated, refined by a residual block and decoded by
//! a sigmoid-ranged depth head.

use super::layers::{self, conv, conv_act, LEAKY_SLOPE};
use super::params::{BoundParams, Initializer, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Var;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionNetConfig {
    pub feature_channels: usize,
    pub heads: usize,
    /// Attention runs on features downsampled spatially by this factor.
    pub token_downsample: usize,
    /// Scale attention logits by `1/sqrt(head_dim)`; `false` uses the bare
    /// `softmax(Q·Kᵀ)` form.
    pub scaled_logits: bool,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for FusionNetConfig {
    fn default() -> Self {
        FusionNetConfig {
            feature_channels: 8,
            heads: 2,
            token_downsample: 4,
            scaled_logits: true,
            d_min: 1.0,
            d_max: 25.0,
        }
    }
}

/// Which side of the dual-branch network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Rgb,
    Thr,
}

impl Branch {
    fn name(self) -> &'static str {
        match self {
            Branch::Rgb => "rgb",
            Branch::Thr => "thr",
        }
    }

    fn image_channels(self) -> usize {
        match self {
            Branch::Rgb => 3,
            Branch::Thr => 1,
        }
    }
}

/// Attention outputs at the input extent plus the per-head attention
/// matrices (`[tokens, tokens]`, row-stochastic).
pub struct AttentionOutput<'t> {
    pub rgb: Var<'t>,
    pub thr: Var<'t>,
    pub weights_rgb: Vec<Var<'t>>,
    pub weights_thr: Vec<Var<'t>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionNet {
    pub cfg: FusionNetConfig,
}

impl FusionNet {
    pub fn new(cfg: FusionNetConfig) -> Result<Self> {
        if cfg.heads == 0 || cfg.feature_channels == 0 || !cfg.feature_channels.is_multiple_of(cfg.heads) {
            return Err(Error::invalid(format!(
                "feature_channels {} must be a positive multiple of heads {}",
                cfg.feature_channels, cfg.heads
            )));
        }
        if cfg.token_downsample == 0 {
            return Err(Error::invalid("token_downsample must be at least 1"));
        }
        if !(cfg.d_min > 0.0 && cfg.d_max > cfg.d_min) {
            return Err(Error::invalid(
                "fusion depth range must satisfy 0 < d_min < d_max",
            ));
        }
        Ok(FusionNet { cfg })
    }

    pub fn init(&self, seed: u64) -> Result<NetworkParams> {
        let f = self.cfg.feature_channels;
        let mut init = Initializer::new(seed);
        for b in [Branch::Rgb, Branch::Thr] {
            let n = b.name();
            init.conv(&format!("branch_{n}.conv"), f, b.image_channels() + 1, 3)?;
            init.conv(&format!("branch_{n}.ffn1"), f, f, 1)?;
            init.conv(&format!("branch_{n}.ffn2"), f, f, 1)?;
        }
        for side in ["1", "2"] {
            for proj in ["q", "k", "v", "o"] {
                init.linear(&format!("attn.w{proj}{side}"), f, f)?;
            }
        }
        init.conv("res.conv1", f, 2 * f, 3)?;
        init.norm("res.norm", f)?;
        init.conv("res.conv2", f, f, 3)?;
        init.conv("res.skip", f, 2 * f, 1)?;
        init.conv("head", 1, f, 3)?;
        Ok(init.finish())
    }

    fn depth_scale(&self) -> f64 {
        1.0 / self.cfg.d_max
    }

    /// `FFN(conv(cat(image, depth)) · confidence)`.
    pub fn branch_features<'t>(
        &self,
        p: &BoundParams<'t>,
        branch: Branch,
        image: &Var<'t>,
        depth: &Var<'t>,
        confidence: &Var<'t>,
    ) -> Result<Var<'t>> {
        Ok(self.branch_stages(p, branch, image, depth, confidence)?.1)
    }

    /// Returns the confidence-weighted conv features and the FFN output.
    pub fn branch_stages<'t>(
        &self,
        p: &BoundParams<'t>,
        branch: Branch,
        image: &Var<'t>,
        depth: &Var<'t>,
        confidence: &Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let n = branch.name();
        layers::expect_channels(image, branch.image_channels(), "branch image")?;
        layers::expect_channels(depth, 1, "branch depth")?;
        layers::expect_channels(confidence, 1, "branch confidence")?;
        let hw = layers::spatial(image)?;
        if layers::spatial(depth)? != hw || layers::spatial(confidence)? != hw {
            return Err(Error::shape(format!("{n} branch inputs are not aligned")));
        }
        let x = image
            .tape()
            .concat(&[*image, depth.scale(self.depth_scale())], 0)?;
        let weighted = conv(p, &format!("branch_{n}.conv"), &x, 1)?.mul(confidence)?;
        let hidden = conv_act(p, &format!("branch_{n}.ffn1"), &weighted, 1)?;
        let out = conv(p, &format!("branch_{n}.ffn2"), &hidden, 1)?;
        Ok((weighted, out))
    }

    /// Cross-modal attention: `rgb = softmax(Q₁K₁ᵀ)V₂` with `Q₁, K₁` from the
    /// RGB features and `V₂` from the thermal ones, and symmetrically for
    /// `thr`. Heads are concatenated and projected, then upsampled back.
    pub fn attention<'t>(
        &self,
        p: &BoundParams<'t>,
        f_rgb: &Var<'t>,
        f_thr: &Var<'t>,
    ) -> Result<AttentionOutput<'t>> {
        let f = self.cfg.feature_channels;
        layers::expect_channels(f_rgb, f, "rgb features")?;
        layers::expect_channels(f_thr, f, "thermal features")?;
        let (h, w) = layers::spatial(f_rgb)?;
        if layers::spatial(f_thr)? != (h, w) {
            return Err(Error::shape("attention inputs have different extents"));
        }
        let td = self.cfg.token_downsample;
        let (th, tw) = ((h / td).max(1), (w / td).max(1));
        let tokens = |x: &Var<'t>| -> Result<Var<'t>> {
            x.resize_bilinear(th, tw)?
                .reshape(&[f, th * tw])?
                .transpose()
        };
        let (t_rgb, t_thr) = (tokens(f_rgb)?, tokens(f_thr)?);
        let (rgb, weights_rgb) = self.attend(p, "1", &t_rgb, &t_thr)?;
        let (thr, weights_thr) = self.attend(p, "2", &t_thr, &t_rgb)?;
        let untoken = |t: Var<'t>| -> Result<Var<'t>> {
            t.transpose()?.reshape(&[f, th, tw])?.resize_bilinear(h, w)
        };
        Ok(AttentionOutput {
            rgb: untoken(rgb)?,
            thr: untoken(thr)?,
            weights_rgb,
            weights_thr,
        })
    }

    /// Multi-head `softmax(Q Kᵀ) V` over `[tokens, channels]` inputs; queries
    /// and keys from `qk_src`, values from `v_src`.
    fn attend<'t>(
        &self,
        p: &BoundParams<'t>,
        side: &str,
        qk_src: &Var<'t>,
        v_src: &Var<'t>,
    ) -> Result<(Var<'t>, Vec<Var<'t>>)> {
        let heads = self.cfg.heads;
        let dh = self.cfg.feature_channels / heads;
        let q = qk_src.matmul(&p.get(&format!("attn.wq{side}"))?)?;
        let k = qk_src.matmul(&p.get(&format!("attn.wk{side}"))?)?;
        let v = v_src.matmul(&p.get(&format!("attn.wv{side}"))?)?;
        let scale = if self.cfg.scaled_logits {
            1.0 / (dh as f64).sqrt()
        } else {
            1.0
        };
        let mut outs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = q.slice(1, hd * dh, dh)?;
            let kh = k.slice(1, hd * dh, dh)?;
            let vh = v.slice(1, hd * dh, dh)?;
            let att = qh.matmul(&kh.transpose()?)?.scale(scale).softmax(1)?;
            outs.push(att.matmul(&vh)?);
            weights.push(att);
        }
        let merged = qk_src.tape().concat(&outs, 1)?;
        Ok((merged.matmul(&p.get(&format!("attn.wo{side}"))?)?, weights))
    }

    /// Final fused depth `[1, H, W]` in `(d_min, d_max)`. Every input is in
    /// the RGB view at the RGB extent; `c_rgb + c_thr` should be 1 and both
    /// depths inside the range.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'t>(
        &self,
        p: &BoundParams<'t>,
        i_rgb: &Var<'t>,
        i_thr_warped: &Var<'t>,
        d_rgb: &Var<'t>,
        d_thr_warped: &Var<'t>,
        c_rgb: &Var<'t>,
        c_thr: &Var<'t>,
    ) -> Result<Var<'t>> {
        let (h, w) = layers::spatial(i_rgb)?;
        let f_rgb = self.branch_features(p, Branch::Rgb, i_rgb, d_rgb, c_rgb)?;
        let f_thr = self.branch_features(p, Branch::Thr, i_thr_warped, d_thr_warped, c_thr)?;
        if layers::spatial(&f_thr)? != (h, w) {
            return Err(Error::shape(
                "thermal branch is not aligned with the rgb view",
            ));
        }
        let att = self.attention(p, &f_rgb, &f_thr)?;
        let g_rgb = f_rgb.add(&att.rgb)?;
        let g_thr = f_thr.add(&att.thr)?;
        let cat = i_rgb.tape().concat(&[g_rgb, g_thr], 0)?;
        let y = conv(p, "res.conv1", &cat, 1)?;
        let y = layers::channel_norm(p, "res.norm", &y)?.leaky_relu(LEAKY_SLOPE);
        let y = conv(p, "res.conv2", &y, 1)?;
        let skip = conv(p, "res.skip", &cat, 1)?;
        let y = y
            .add(&skip)?
            .leaky_relu(LEAKY_SLOPE)
            .resize_bilinear(h, w)?;
        let logits = conv(p, "head", &y, 1)?;
        Ok(layers::depth_range(&logits, self.cfg.d_min, self.cfg.d_max))
    }
}
