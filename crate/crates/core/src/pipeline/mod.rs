//! Experimental procedures: pretraining, phase 1, phase 2, finetuning,
//! the ablation grid, RGB-D fusion and reporting.

mod ablation;
mod config;
mod dataset;
mod fusion;
mod report;
mod train;

pub use ablation::{ablation_cell, ablation_grid, cell_seed, AblationCell, AblationInputs, AblationTable};
pub use config::{
    AblationConfig, DataConfig, ExperimentConfig, FusionConfig, Phase, Solver, TrainConfig, TrainOverrides,
};
pub use dataset::{
    colorize_set, load_input, prepare, DepthMapping, InputKind, PreparedSplits, SampleSet, INFERENCE_BATCH,
};
pub use fusion::{cross_validate_alpha, fuse_batch, fuse_predictions};
pub use report::{binomial_upper_tail, EvalReport};
pub use train::{
    chain_logits, evaluate, evaluate_prepared, finetune, finetune_ordering_warning, finetune_prepared,
    pretrain_backbone, pretrain_prepared, train_deco_phase1, train_deco_phase1_prepared, train_head_prepared,
    transfer_phase2, EpochLog, FinetuneOutcome, Phase1Outcome, PretrainOutcome, TrainLog, TransferOutcome,
    PRETRAIN_MIN_ACCURACY,
};

use crate::backbone::Backbone;
use crate::error::Result;

pub struct FusionOutcome {
    pub alpha: f64,
    pub rgb: EvalReport,
    pub depth: EvalReport,
    pub fused: EvalReport,
}

/// Picks alpha on the validation split, then reports RGB-only, depth-only
/// and fused test accuracy. Both networks must already carry heads for the
/// dataset's classes; inputs are three-channel images.
pub fn fusion_experiment(
    rgb_net: &Backbone,
    rgb: &PreparedSplits,
    depth_net: &Backbone,
    depth: &PreparedSplits,
    cfg: &FusionConfig,
    snapshot: &str,
) -> Result<FusionOutcome> {
    cfg.validate()?;
    if rgb.test.labels != depth.test.labels || rgb.val.labels != depth.val.labels {
        return Err(crate::Error::Data("RGB and depth splits are not aligned".into()));
    }
    let val_r = chain_logits(None, rgb_net, &rgb.val)?;
    let val_d = chain_logits(None, depth_net, &depth.val)?;
    let alpha = cross_validate_alpha(&val_r, &val_d, &rgb.val.labels, &cfg.alpha_grid)?;
    let test_r = chain_logits(None, rgb_net, &rgb.test)?;
    let test_d = chain_logits(None, depth_net, &depth.test)?;
    let labels = &rgb.test.labels;
    let fused = fuse_batch(&test_r, &test_d, alpha)?;
    let digest = depth_net.trunk_digest();
    Ok(FusionOutcome {
        alpha,
        rgb: EvalReport::from_predictions("rgb", &rgb.classes, labels, &test_r.argmax(), &rgb_net.trunk_digest(), snapshot)?,
        depth: EvalReport::from_predictions("depth", &rgb.classes, labels, &test_d.argmax(), &digest, snapshot)?,
        fused: EvalReport::from_predictions("fused", &rgb.classes, labels, &fused, &digest, snapshot)?,
    })
}
