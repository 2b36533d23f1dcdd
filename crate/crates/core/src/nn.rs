//! Layer building blocks shared by the colorizer and the backbone.

use std::cell::RefCell;

use deco_tensor::checkpoint::Checkpoint;
use deco_tensor::ops::{self, Mode, RunningStats};
use deco_tensor::{he_normal, InitRng, Parameter, Tensor};

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub struct Conv2d {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut InitRng,
    ) -> Self {
        let w = he_normal(&[c_out, c_in, kernel, kernel], c_in * kernel * kernel, rng);
        Conv2d {
            weight: Parameter::new(format!("{name}.weight"), w),
            bias: bias.then(|| Parameter::new(format!("{name}.bias"), Tensor::zeros(&[c_out]))),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::conv2d(
            x,
            self.weight.tensor(),
            self.bias.as_ref().map(|b| b.tensor()),
            self.stride,
            self.padding,
        )?)
    }

    pub fn params(&self) -> Vec<Parameter> {
        std::iter::once(self.weight.clone()).chain(self.bias.clone()).collect()
    }
}

/// Batch normalization with its own running statistics. The statistics are
/// part of the model state but not trainable parameters.
pub struct BatchNorm {
    pub name: String,
    pub gamma: Parameter,
    pub beta: Parameter,
    pub stats: RefCell<RunningStats>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            name: name.to_string(),
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            stats: RefCell::new(RunningStats::new(channels)),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(ops::batch_norm2d(
            x,
            self.gamma.tensor(),
            self.beta.tensor(),
            &mut self.stats.borrow_mut(),
            mode,
            BN_EPSILON,
            BN_MOMENTUM,
        )?)
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.gamma.clone(), self.beta.clone()]
    }

    fn save_stats(&self, ck: &mut Checkpoint) {
        let s = self.stats.borrow();
        ck.insert(format!("{}.running_mean", self.name), &[s.mean.len()], s.mean.clone());
        ck.insert(format!("{}.running_var", self.name), &[s.var.len()], s.var.clone());
    }

    fn load_stats(&self, ck: &Checkpoint) -> Result<()> {
        let mut guard = self.stats.borrow_mut();
        let s = &mut *guard;
        for (suffix, dst) in [("running_mean", &mut s.mean), ("running_var", &mut s.var)] {
            let key = format!("{}.{suffix}", self.name);
            let e = ck
                .get(&key)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks `{key}`")))?;
            if e.values.len() != dst.len() {
                return Err(Error::Data(format!("checkpoint entry `{key}` has wrong length")));
            }
            dst.copy_from_slice(&e.values);
        }
        Ok(())
    }
}

pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut InitRng) -> Self {
        Linear {
            weight: Parameter::new(format!("{name}.weight"), he_normal(&[d_out, d_in], d_in, rng)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[d_out])),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::linear(x, self.weight.tensor(), self.bias.tensor())?)
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Parameters followed by batch-norm statistics, in a fixed order.
pub(crate) fn state_checkpoint(params: &[Parameter], norms: &[&BatchNorm]) -> Checkpoint {
    let mut ck = Checkpoint::from_params(params);
    for bn in norms {
        bn.save_stats(&mut ck);
    }
    ck
}

pub(crate) fn load_state(ck: &Checkpoint, params: &[Parameter], norms: &[&BatchNorm]) -> Result<()> {
    ck.load_into(params)?;
    for bn in norms {
        bn.load_stats(ck)?;
    }
    Ok(())
}

/// Digest of the complete state (parameters and running statistics).
pub(crate) fn state_digest(ck: &Checkpoint) -> String {
    use sha2::{Digest, Sha256};
    let hash = Sha256::digest(ck.to_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
