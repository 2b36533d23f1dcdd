//! Experiment configuration: one TOML file per run.

use std::collections::BTreeMap;
use std::path::Path;

use deco_tensor::{LrSchedule, OptimizerState, SolverKind};
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::data::synth::SynthConfig;
use crate::data::DEFAULT_CROP_MARGIN;
use crate::deco::DecoConfig;
use crate::error::{Error, Result};
use crate::maps::MapParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Phase1,
    Phase2,
    Finetune,
    Pretrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Nesterov,
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub solver: Solver,
    pub base_lr: f64,
    pub epochs: usize,
    pub step_fraction: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl TrainConfig {
    pub fn defaults(phase: Phase) -> Self {
        let (solver, base_lr, epochs) = match phase {
            Phase::Phase1 | Phase::Phase2 => (Solver::Nesterov, 0.007, 50),
            Phase::Finetune => (Solver::Sgd, 0.001, 90),
            Phase::Pretrain => (Solver::Adam, 0.002, 20),
        };
        TrainConfig {
            phase,
            solver,
            base_lr,
            epochs,
            step_fraction: 0.45,
            gamma: 0.1,
            batch_size: 32,
            seed: 0,
            momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "{:?}: epochs and batch_size must be positive",
                self.phase
            )));
        }
        self.schedule()?;
        self.optimizer()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        Ok(LrSchedule::new(self.base_lr, self.epochs, self.step_fraction, self.gamma)?)
    }

    pub fn optimizer(&self) -> Result<OptimizerState> {
        let kind = match self.solver {
            Solver::Nesterov => SolverKind::Nesterov,
            Solver::Sgd => SolverKind::SgdMomentum,
            Solver::Adam => SolverKind::Adam,
        };
        let momentum = if self.solver == Solver::Adam { 0.0 } else { self.momentum };
        Ok(OptimizerState::new(kind, self.base_lr, momentum)?)
    }
}

/// Per-phase overrides as written in the config file; unset keys take the
/// phase defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub solver: Option<Solver>,
    pub base_lr: Option<f64>,
    pub epochs: Option<usize>,
    pub step_fraction: Option<f64>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub momentum: Option<f64>,
}

impl TrainOverrides {
    pub fn resolve(&self, phase: Phase, global_seed: u64) -> TrainConfig {
        let d = TrainConfig::defaults(phase);
        TrainConfig {
            phase,
            solver: self.solver.unwrap_or(d.solver),
            base_lr: self.base_lr.unwrap_or(d.base_lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            step_fraction: self.step_fraction.unwrap_or(d.step_fraction),
            gamma: self.gamma.unwrap_or(d.gamma),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(global_seed),
            momentum: self.momentum.unwrap_or(d.momentum),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Weight on the RGB logits.
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 0.5,
            alpha_grid: (0..=20).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |a: f64| !(0.0..=1.0).contains(&a);
        if bad(self.alpha) || self.alpha_grid.iter().any(|&a| bad(a)) {
            return Err(Error::Config("fusion alpha values must lie in [0, 1]".into()));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("fusion alpha_grid must not be empty".into()));
        }
        Ok(())
    }
}

/// How depth files become fixed-size network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub image_size: usize,
    /// Crop to the object mask (when the manifest provides one).
    pub mask_crop: bool,
    pub crop_margin: f64,
    /// Pad to a square before resizing instead of stretching.
    pub pad_to_square: bool,
    pub val_fraction: f64,
    pub reference: Option<String>,
    pub testbed: Option<String>,
    pub rgb: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            image_size: 64,
            mask_crop: true,
            crop_margin: DEFAULT_CROP_MARGIN,
            pad_to_square: false,
            val_fraction: 0.1,
            reference: None,
            testbed: None,
            rgb: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub blocks: Vec<usize>,
    pub filters: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            blocks: vec![4, 8, 16],
            filters: vec![32, 64, 128],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub deco: DecoConfig,
    pub backbone: BackboneConfig,
    pub pretrain: TrainOverrides,
    pub phase1: TrainOverrides,
    pub phase2: TrainOverrides,
    pub finetune: TrainOverrides,
    pub fusion: FusionConfig,
    pub ablation: AblationConfig,
    pub maps: MapParams,
    /// Named synthetic datasets written by `gen-data`.
    pub synth: BTreeMap<String, SynthConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn train(&self, phase: Phase) -> TrainConfig {
        let o = match phase {
            Phase::Pretrain => &self.pretrain,
            Phase::Phase1 => &self.phase1,
            Phase::Phase2 => &self.phase2,
            Phase::Finetune => &self.finetune,
        };
        o.resolve(phase, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.deco.validate()?;
        self.backbone.validate()?;
        self.fusion.validate()?;
        self.maps.validate()?;
        for phase in [Phase::Pretrain, Phase::Phase1, Phase::Phase2, Phase::Finetune] {
            self.train(phase).validate()?;
        }
        let s = self.data.image_size;
        if s != self.deco.input_size || s != self.backbone.input_size {
            return Err(Error::Config(format!(
                "data.image_size ({s}), deco.input_size ({}) and backbone.input_size ({}) must agree",
                self.deco.input_size, self.backbone.input_size
            )));
        }
        if !(0.0..1.0).contains(&self.data.val_fraction) || !(self.data.crop_margin >= 0.0) {
            return Err(Error::Config("data.val_fraction must lie in [0, 1) and crop_margin be >= 0".into()));
        }
        if self.ablation.blocks.iter().chain(&self.ablation.filters).any(|&v| v == 0) {
            return Err(Error::Config("ablation grid values must be positive".into()));
        }
        for (name, s) in &self.synth {
            s.validate().map_err(|e| Error::Config(format!("synth.{name}: {e}")))?;
        }
        Ok(())
    }
}
