//! Small RGB classification network standing in for an ImageNet-pretrained
//! model. Trunk: three conv-BN-leaky-pool stages (3→16→32→64) and a
//! 128-unit fully connected layer; a replaceable final layer maps to K
//! classes.

use std::path::{Path, PathBuf};

use deco_tensor::checkpoint::Checkpoint;
use deco_tensor::ops::{self, Mode};
use deco_tensor::{fingerprint, seeded_rng, Parameter, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{load_state, state_checkpoint, state_digest, BatchNorm, Conv2d, Linear};

pub const STAGE_CHANNELS: [usize; 4] = [3, 16, 32, 64];
pub const HIDDEN: usize = 128;
const MEAN_KEY: &str = "backbone.channel_mean";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub input_size: usize,
    pub leaky_slope: f64,
    /// Euclidean norm the 128-d features are rescaled to before the final
    /// layer.
    pub feature_norm: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_size: 64,
            leaky_slope: 0.1,
            feature_norm: 16.0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "backbone input_size must be a positive multiple of 8, got {}",
                self.input_size
            )));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "backbone leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        if !(self.feature_norm > 0.0 && self.feature_norm.is_finite()) {
            return Err(Error::Config(format!(
                "backbone feature_norm must be positive, got {}",
                self.feature_norm
            )));
        }
        Ok(())
    }

    fn flat_features(&self) -> usize {
        let s = self.input_size / 8;
        STAGE_CHANNELS[3] * s * s
    }
}

pub struct Stage {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

pub struct Backbone {
    pub config: BackboneConfig,
    pub stages: Vec<Stage>,
    pub fc: Linear,
    pub final_layer: Linear,
    pub classes: Vec<String>,
    /// Per-channel mean of the [0, 1]-scaled training images.
    pub channel_mean: [f64; 3],
}

/// Per-sample logits over a named class list.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitBatch {
    pub classes: Vec<String>,
    /// Row-major `[rows, classes.len()]`.
    pub values: Vec<f64>,
}

impl LogitBatch {
    pub fn rows(&self) -> usize {
        self.values.len() / self.classes.len().max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.classes.len();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows()).map(|i| argmax(self.row(i))).collect()
    }

    pub fn softmax(&self) -> Vec<f64> {
        ops::softmax_rows(&self.values, self.classes.len())
    }

    pub fn extend(&mut self, other: &LogitBatch) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Data("cannot join logits over different class lists".into()));
        }
        self.values.extend_from_slice(&other.values);
        Ok(())
    }
}

/// Index of the largest value; the first index wins exact ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Backbone {
    pub fn new(cfg: &BackboneConfig, classes: &[String], seed: u64) -> Result<Self> {
        cfg.validate()?;
        if classes.is_empty() {
            return Err(Error::Config("backbone needs at least one class".into()));
        }
        let mut rng = seeded_rng(seed);
        let stages = (0..3)
            .map(|i| Stage {
                conv: Conv2d::new(
                    &format!("backbone.stage{i}.conv"),
                    STAGE_CHANNELS[i],
                    STAGE_CHANNELS[i + 1],
                    3,
                    1,
                    1,
                    false,
                    &mut rng,
                ),
                bn: BatchNorm::new(&format!("backbone.stage{i}.bn"), STAGE_CHANNELS[i + 1]),
            })
            .collect();
        let fc = Linear::new("backbone.fc", cfg.flat_features(), HIDDEN, &mut rng);
        let final_layer = Linear::new("backbone.final", HIDDEN, classes.len(), &mut rng);
        Ok(Backbone {
            config: cfg.clone(),
            stages,
            fc,
            final_layer,
            classes: classes.to_vec(),
            channel_mean: [0.0; 3],
        })
    }

    pub fn trunk_params(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.extend(s.conv.params());
            out.extend(s.bn.params());
        }
        out.extend(self.fc.params());
        out
    }

    pub fn head_params(&self) -> Vec<Parameter> {
        self.final_layer.params()
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut out = self.trunk_params();
        out.extend(self.head_params());
        out
    }

    pub(crate) fn norms(&self) -> Vec<&BatchNorm> {
        self.stages.iter().map(|s| &s.bn).collect()
    }

    pub fn freeze_trunk(&self) {
        for p in self.trunk_params() {
            p.set_frozen(true);
        }
    }

    pub fn unfreeze_trunk(&self) {
        for p in self.trunk_params() {
            p.set_frozen(false);
        }
    }

    pub fn trunk_frozen(&self) -> bool {
        self.trunk_params().iter().all(|p| p.is_frozen())
    }

    /// Digest of the trunk weights and batch-norm statistics.
    pub fn trunk_fingerprint(&self) -> u64 {
        let mut h = fingerprint(&self.trunk_params());
        for bn in self.norms() {
            let s = bn.stats.borrow();
            for v in s.mean.iter().chain(&s.var) {
                h = (h ^ v.to_bits()).wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }

    /// New He-initialized final layer for `classes`; the trunk is untouched.
    pub fn replace_final_layer(&mut self, classes: &[String], seed: u64) -> Result<()> {
        if classes.is_empty() {
            return Err(Error::Config("final layer needs at least one class".into()));
        }
        let mut rng = seeded_rng(seed);
        self.final_layer = Linear::new("backbone.final", HIDDEN, classes.len(), &mut rng);
        self.classes = classes.to_vec();
        Ok(())
    }

    /// `[B, 3, S, S]` in [0, 255] → scaled to [0, 1], minus the channel mean.
    pub fn preprocess(&self, x: &Tensor) -> Result<Tensor> {
        let s = self.config.input_size;
        match x.shape() {
            [_, 3, h, w] if *h == s && *w == s => {}
            other => {
                return Err(Error::Data(format!(
                    "backbone expects images [B, 3, {s}, {s}], got {other:?}"
                )))
            }
        }
        let neg: Vec<f64> = self.channel_mean.iter().map(|m| -m).collect();
        Ok(ops::shift_channels(&ops::scale(x, 1.0 / 255.0), &neg)?)
    }

    /// Penultimate 128-d activations of preprocessed images, rescaled to
    /// norm `feature_norm`. The fixed norm bounds the curvature seen by the
    /// final layer, so one learning rate suits every mapping.
    pub fn features(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let slope = self.config.leaky_slope;
        let mut y = x.clone();
        for s in &self.stages {
            y = s.bn.forward(&s.conv.forward(&y)?, mode)?;
            y = ops::maxpool2d(&ops::leaky_relu(&y, slope), 2, 2, 0)?;
        }
        let y = self.fc.forward(&ops::flatten(&y)?)?;
        Ok(ops::normalize_rows(&ops::leaky_relu(&y, slope), self.config.feature_norm, 1e-12)?)
    }

    pub fn head(&self, features: &Tensor) -> Result<Tensor> {
        self.final_layer.forward(features)
    }

    /// Full forward from raw [0, 255] images to logits.
    pub fn forward(&self, images: &Tensor, mode: Mode) -> Result<Tensor> {
        let f = self.features(&self.preprocess(images)?, mode)?;
        self.head(&f)
    }

    /// Eval-mode logits for a batch of raw images.
    pub fn logits(&self, images: &Tensor) -> Result<LogitBatch> {
        let y = self.forward(images, Mode::Eval)?;
        Ok(LogitBatch {
            classes: self.classes.clone(),
            values: y.to_vec(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = state_checkpoint(&self.params(), &self.norms());
        ck.insert(MEAN_KEY, &[3], self.channel_mean.to_vec());
        ck
    }

    pub fn trunk_checkpoint(&self) -> Checkpoint {
        let mut ck = state_checkpoint(&self.trunk_params(), &self.norms());
        ck.insert(MEAN_KEY, &[3], self.channel_mean.to_vec());
        ck
    }

    pub fn digest(&self) -> String {
        state_digest(&self.checkpoint())
    }

    /// sha256 of the trunk state: the identity of the feature extractor.
    pub fn trunk_digest(&self) -> String {
        state_digest(&self.trunk_checkpoint())
    }

    /// Independent copy with the same weights, statistics and frozen flags.
    pub fn duplicate(&self) -> Result<Backbone> {
        let mut b = Backbone::new(&self.config, &self.classes, 0)?;
        b.load_checkpoint(&self.checkpoint(), true)?;
        if self.trunk_frozen() {
            b.freeze_trunk();
        }
        Ok(b)
    }

    /// Loads trunk, statistics and channel mean; the final layer too when
    /// the checkpoint carries one of matching shape.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint, with_head: bool) -> Result<()> {
        load_state(ck, &self.trunk_params(), &self.norms())?;
        if with_head {
            ck.load_into(&self.head_params())?;
        }
        let m = ck
            .get(MEAN_KEY)
            .ok_or_else(|| Error::Data(format!("checkpoint lacks `{MEAN_KEY}`")))?;
        if m.values.len() != 3 {
            return Err(Error::Data(format!("`{MEAN_KEY}` must have 3 entries")));
        }
        self.channel_mean.copy_from_slice(&m.values);
        Ok(())
    }

    /// Writes the checkpoint at `path` and the class list beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)?;
        std::fs::write(classes_path(path), self.classes.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: &BackboneConfig) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let cpath = classes_path(path);
        let text = std::fs::read_to_string(&cpath).map_err(|_| Error::MissingArtifact(cpath.clone()))?;
        let classes: Vec<String> = text.lines().filter(|l| !l.is_empty()).map(String::from).collect();
        let mut m = Backbone::new(cfg, &classes, 0)?;
        let ck = Checkpoint::load(path)?;
        m.load_checkpoint(&ck, true)?;
        Ok(m)
    }
}

pub fn classes_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".classes");
    PathBuf::from(s)
}
