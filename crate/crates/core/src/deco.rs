//! The residual depth colorization network.
//!
//! stem: conv k7 s2 p3 → BN → leaky → maxpool k3 s2 p1 (S → S/4)
//! blocks: [conv k3 → BN → leaky → conv k3 → BN] + skip → leaky
//! head: conv F→3 k3, then a ×4 transposed conv (k8 s4 p2) and sigmoid·255.

use deco_tensor::checkpoint::Checkpoint;
use deco_tensor::ops::{self, Mode};
use deco_tensor::{fingerprint, seeded_rng, Parameter, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::resize_gray;
use crate::error::{Error, Result};
use crate::nn::{load_state, state_checkpoint, state_digest, BatchNorm, Conv2d};
use crate::raster::{quantize_u8, ColorImage, GrayImage};

pub const UPSAMPLE_KERNEL: usize = 8;
pub const UPSAMPLE_STRIDE: usize = 4;
pub const UPSAMPLE_PADDING: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Sigmoid255,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoConfig {
    pub input_size: usize,
    pub num_blocks: usize,
    pub num_filters: usize,
    pub leaky_slope: f64,
    pub output_activation: OutputActivation,
}

impl Default for DecoConfig {
    fn default() -> Self {
        DecoConfig {
            input_size: 64,
            num_blocks: 8,
            num_filters: 64,
            leaky_slope: 0.2,
            output_activation: OutputActivation::Sigmoid255,
        }
    }
}

impl DecoConfig {
    pub fn new(input_size: usize, num_blocks: usize, num_filters: usize) -> Self {
        DecoConfig {
            input_size,
            num_blocks,
            num_filters,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "deco input_size must be a positive multiple of 4, got {}",
                self.input_size
            )));
        }
        if self.num_blocks == 0 || self.num_filters == 0 {
            return Err(Error::Config("deco needs at least one block and one filter".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let f = self.num_filters;
        let stem = 49 * f + 2 * f;
        let blocks = self.num_blocks * (18 * f * f + 4 * f);
        let head = 27 * f + 3;
        let up = 3 * 3 * UPSAMPLE_KERNEL * UPSAMPLE_KERNEL;
        stem + blocks + head + up
    }
}

pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
}

impl ResidualBlock {
    pub fn forward(&self, x: &Tensor, mode: Mode, slope: f64) -> Result<Tensor> {
        let y = self.conv1.forward(x)?;
        let y = ops::leaky_relu(&self.bn1.forward(&y, mode)?, slope);
        let y = self.bn2.forward(&self.conv2.forward(&y)?, mode)?;
        Ok(ops::leaky_relu(&ops::add(&y, x)?, slope))
    }
}

pub struct DecoModel {
    pub config: DecoConfig,
    pub stem_conv: Conv2d,
    pub stem_bn: BatchNorm,
    pub blocks: Vec<ResidualBlock>,
    pub head: Conv2d,
    pub upsampler: Parameter,
}

/// Bilinear-interpolation kernel for a ×`factor` upsampling transposed conv.
pub fn bilinear_kernel(k: usize) -> Vec<f64> {
    let factor = k.div_ceil(2) as f64;
    let centre = if k % 2 == 1 { factor - 1.0 } else { factor - 0.5 };
    let tap = |i: usize| 1.0 - (i as f64 - centre).abs() / factor;
    (0..k * k).map(|idx| tap(idx / k) * tap(idx % k)).collect()
}

pub fn build_deco(cfg: &DecoConfig, seed: u64) -> Result<DecoModel> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let f = cfg.num_filters;
    let stem_conv = Conv2d::new("deco.stem.conv", 1, f, 7, 2, 3, false, &mut rng);
    let stem_bn = BatchNorm::new("deco.stem.bn", f);
    let blocks = (0..cfg.num_blocks)
        .map(|i| {
            let n = format!("deco.block{i}");
            ResidualBlock {
                conv1: Conv2d::new(&format!("{n}.conv1"), f, f, 3, 1, 1, false, &mut rng),
                bn1: BatchNorm::new(&format!("{n}.bn1"), f),
                conv2: Conv2d::new(&format!("{n}.conv2"), f, f, 3, 1, 1, false, &mut rng),
                bn2: BatchNorm::new(&format!("{n}.bn2"), f),
            }
        })
        .collect();
    let head = Conv2d::new("deco.head", f, 3, 3, 1, 1, true, &mut rng);

    let k = UPSAMPLE_KERNEL;
    let filt = bilinear_kernel(k);
    let mut w = vec![0.0; 3 * 3 * k * k];
    for c in 0..3 {
        let off = (c * 3 + c) * k * k;
        w[off..off + k * k].copy_from_slice(&filt);
    }
    let upsampler = Parameter::new("deco.upsampler.weight", Tensor::from_vec(w, &[3, 3, k, k])?);

    Ok(DecoModel {
        config: cfg.clone(),
        stem_conv,
        stem_bn,
        blocks,
        head,
        upsampler,
    })
}

impl DecoModel {
    pub fn params(&self) -> Vec<Parameter> {
        let mut out = self.stem_conv.params();
        out.extend(self.stem_bn.params());
        for b in &self.blocks {
            out.extend(b.conv1.params());
            out.extend(b.bn1.params());
            out.extend(b.conv2.params());
            out.extend(b.bn2.params());
        }
        out.extend(self.head.params());
        out.push(self.upsampler.clone());
        out
    }

    fn norms(&self) -> Vec<&BatchNorm> {
        let mut out = vec![&self.stem_bn];
        for b in &self.blocks {
            out.push(&b.bn1);
            out.push(&b.bn2);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor().numel()).sum()
    }

    pub fn set_frozen(&self, frozen: bool) {
        for p in self.params() {
            p.set_frozen(frozen);
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params().iter().all(|p| p.is_frozen())
    }

    /// Bitwise digest of the trainable parameters.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.params())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        state_checkpoint(&self.params(), &self.norms())
    }

    pub fn load_checkpoint(&self, ck: &Checkpoint) -> Result<()> {
        load_state(ck, &self.params(), &self.norms())
    }

    /// sha256 over the serialized state, including batch-norm statistics.
    pub fn digest(&self) -> String {
        state_digest(&self.checkpoint())
    }

    /// `[B, 1, S, S]` → `[B, 3, S/4, S/4]` feature extent of the stem.
    pub fn stem_forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.stem_bn.forward(&self.stem_conv.forward(x)?, mode)?;
        let y = ops::leaky_relu(&y, self.config.leaky_slope);
        Ok(ops::maxpool2d(&y, 3, 2, 1)?)
    }

    /// `[B, 1, S, S]` with values in [0, 1] → `[B, 3, S, S]` in (0, 255).
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = self.config.input_size;
        match x.shape() {
            [_, 1, h, w] if *h == s && *w == s => {}
            other => {
                return Err(Error::Data(format!(
                    "deco expects input [B, 1, {s}, {s}], got {other:?}"
                )))
            }
        }
        let mut y = self.stem_forward(x, mode)?;
        for b in &self.blocks {
            y = b.forward(&y, mode, self.config.leaky_slope)?;
        }
        let y = self.head.forward(&y)?;
        let y = ops::transposed_conv2d(&y, self.upsampler.tensor(), UPSAMPLE_STRIDE, UPSAMPLE_PADDING)?;
        match self.config.output_activation {
            OutputActivation::Sigmoid255 => Ok(ops::scale(&ops::sigmoid(&y), 255.0)),
        }
    }

    /// Resizes to the input size, scales to [0, 1] and colorizes in eval mode.
    pub fn colorize_image(&self, g: &GrayImage) -> Result<ColorImage> {
        let x = gray_batch(std::slice::from_ref(g), self.config.input_size)?;
        let y = self.forward(&x, Mode::Eval)?;
        let s = self.config.input_size;
        let planes = y.data();
        let n = s * s;
        let mut data = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                data.push(quantize_u8(planes[c * n + i]));
            }
        }
        ColorImage::new(s, s, data)
    }
}

/// Stacks grayscale images (resized to `size` if needed) into a
/// `[B, 1, size, size]` tensor scaled to [0, 1].
pub fn gray_batch(images: &[GrayImage], size: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * size * size);
    for g in images {
        if g.width == size && g.height == size {
            data.extend(g.values.iter().map(|&v| v as f64 / 255.0));
        } else {
            data.extend(resize_gray(g, size, size).values.iter().map(|&v| v as f64 / 255.0));
        }
    }
    Ok(Tensor::from_vec(data, &[images.len(), 1, size, size])?)
}
