//! The training protocols: backbone pretraining, phase 1 (mapping + head
//! against a frozen trunk), phase 2 (new head only) and finetuning.

use std::fmt::Write as _;

use deco_tensor::checkpoint::Checkpoint;
use deco_tensor::ops::{self, Mode};
use deco_tensor::{OptimizerState, Parameter, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Phase, TrainConfig};
use super::dataset::{prepare, DepthMapping, InputKind, PreparedSplits, SampleSet, INFERENCE_BATCH};
use super::report::EvalReport;
use crate::backbone::{argmax, Backbone, BackboneConfig, LogitBatch, HIDDEN};
use crate::data::{DatasetManifest, SplitMode};
use crate::deco::DecoModel;
use crate::error::{Error, Result};

/// Minimum validation accuracy a pretrained backbone must reach.
pub const PRETRAIN_MIN_ACCURACY: f64 = 0.90;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub phase: Phase,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept (best validation accuracy, earliest on
    /// ties; the last epoch when there is no validation data).
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_accuracy,val_loss,val_accuracy\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                e.epoch,
                e.lr,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            )
            .unwrap();
        }
        out
    }

    pub fn best(&self) -> &EpochLog {
        &self.epochs[self.best_epoch]
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn correct(logits: &Tensor, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    let d = logits.data();
    labels.iter().enumerate().filter(|(i, &l)| argmax(&d[i * k..(i + 1) * k]) == l).count()
}

/// Shared mini-batch loop. `step` builds the loss of one batch and reports
/// how many of its samples were classified correctly; `validate` returns
/// `(loss, accuracy)` or `None` without validation data.
fn fit(
    cfg: &TrainConfig,
    params: &[Parameter],
    n_train: usize,
    mut step: impl FnMut(&[usize]) -> Result<(Tensor, usize)>,
    mut validate: impl FnMut() -> Result<Option<(f64, f64)>>,
    mut snapshot: impl FnMut() -> Vec<Checkpoint>,
    mut restore: impl FnMut(&[Checkpoint]) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::Data(format!("{:?}: training split is empty", cfg.phase)));
    }
    let schedule = cfg.schedule()?;
    let mut opt: OptimizerState = cfg.optimizer()?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<Checkpoint>)> = None;
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch)?;
        opt.learning_rate = lr;
        let (mut loss_sum, mut hits) = (0.0, 0);
        for chunk in epoch_order(n_train, cfg.seed, epoch).chunks(cfg.batch_size) {
            OptimizerState::zero_grad(params);
            let (loss, ok) = step(chunk)?;
            let l = loss.item();
            if !l.is_finite() {
                return Err(Error::Training(format!(
                    "{:?}: loss became {l} at epoch {epoch}; lower the learning rate",
                    cfg.phase
                )));
            }
            loss.backward()?;
            opt.step(params)?;
            loss_sum += l * chunk.len() as f64;
            hits += ok;
        }
        let val = validate()?;
        if let Some((_, acc)) = val {
            if best.as_ref().is_none_or(|b| acc > b.1) {
                best = Some((epoch, acc, snapshot()));
            }
        }
        epochs.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / n_train as f64,
            train_accuracy: hits as f64 / n_train as f64,
            val_loss: val.map(|v| v.0),
            val_accuracy: val.map(|v| v.1),
        });
    }
    let best_epoch = match best {
        Some((e, _, state)) => {
            restore(&state)?;
            e
        }
        None => cfg.epochs - 1,
    };
    Ok(TrainLog {
        phase: cfg.phase,
        epochs,
        best_epoch,
    })
}

/// Eval-mode logits of `set`, optionally colorized by `deco` first.
pub fn chain_logits(deco: Option<&DecoModel>, backbone: &Backbone, set: &SampleSet) -> Result<LogitBatch> {
    let mut out = LogitBatch {
        classes: backbone.classes.clone(),
        values: Vec::with_capacity(set.len() * backbone.classes.len()),
    };
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(INFERENCE_BATCH) {
        let mut x = set.batch(chunk)?;
        if let Some(d) = deco {
            x = d.forward(&x, Mode::Eval)?;
        }
        out.values.extend_from_slice(&backbone.forward(&x, Mode::Eval)?.data());
    }
    Ok(out)
}

fn loss_and_accuracy(logits: &LogitBatch, labels: &[usize]) -> Result<(f64, f64)> {
    let k = logits.classes.len();
    let t = Tensor::from_vec(logits.values.clone(), &[labels.len(), k])?;
    let loss = ops::softmax_cross_entropy(&t, labels)?.item();
    Ok((loss, correct(&t, labels) as f64 / labels.len() as f64))
}

fn head_seed(cfg: &TrainConfig) -> u64 {
    cfg.seed ^ 0x5e_ed0f_4ead
}

fn require_split(m: &DatasetManifest, exp: &ExperimentConfig, mode: SplitMode, seed: u64) -> Result<DatasetManifest> {
    if m.entries.iter().all(|e| e.split.is_some()) {
        Ok(m.clone())
    } else {
        m.make_split(seed, exp.data.val_fraction, mode)
    }
}

pub struct Phase1Outcome {
    pub log: TrainLog,
    /// Eval-mode accuracy on the training split with the kept weights.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Jointly trains the colorizer and a fresh final layer through the frozen
/// trunk. `data` holds one-channel depth inputs.
pub fn train_deco_phase1_prepared(
    deco: &DecoModel,
    backbone: &mut Backbone,
    data: &PreparedSplits,
    cfg: &TrainConfig,
) -> Result<Phase1Outcome> {
    if !backbone.trunk_frozen() {
        return Err(Error::Protocol("phase 1 requires a frozen backbone trunk".into()));
    }
    if data.train.channels != 1 {
        return Err(Error::Data("phase 1 expects single-channel depth inputs".into()));
    }
    deco.set_frozen(false);
    backbone.replace_final_layer(&data.classes, head_seed(cfg))?;
    let backbone = &*backbone;
    let mut params = deco.params();
    params.extend(backbone.head_params());

    let log = fit(
        cfg,
        &params,
        data.train.len(),
        |idx| {
            let y = deco.forward(&data.train.batch(idx)?, Mode::Train)?;
            let logits = backbone.forward(&y, Mode::Eval)?;
            let labels = data.train.labels_of(idx);
            let ok = correct(&logits, &labels);
            Ok((ops::softmax_cross_entropy(&logits, &labels)?, ok))
        },
        || {
            if data.val.is_empty() {
                return Ok(None);
            }
            let l = chain_logits(Some(deco), backbone, &data.val)?;
            loss_and_accuracy(&l, &data.val.labels).map(Some)
        },
        || vec![deco.checkpoint(), Checkpoint::from_params(&backbone.head_params())],
        |s| {
            deco.load_checkpoint(&s[0])?;
            s[1].load_into(&backbone.head_params())?;
            Ok(())
        },
    )?;
    let train_accuracy = loss_and_accuracy(&chain_logits(Some(deco), backbone, &data.train)?, &data.train.labels)?.1;
    let val_accuracy = log.best().val_accuracy;
    Ok(Phase1Outcome {
        log,
        train_accuracy,
        val_accuracy,
    })
}

/// Phase 1 on a reference manifest; a sample-level validation split is
/// drawn when the manifest carries none.
pub fn train_deco_phase1(
    deco: &DecoModel,
    backbone: &mut Backbone,
    reference: &DatasetManifest,
    exp: &ExperimentConfig,
) -> Result<Phase1Outcome> {
    if !backbone.trunk_frozen() {
        return Err(Error::Protocol("phase 1 requires a frozen backbone trunk".into()));
    }
    let cfg = exp.train(Phase::Phase1);
    let m = require_split(reference, exp, SplitMode::Sample, cfg.seed)?;
    let data = prepare(&m, InputKind::DepthGray, &exp.data, &exp.maps)?;
    train_deco_phase1_prepared(deco, backbone, &data, &cfg)
}

pub struct TransferOutcome {
    pub log: TrainLog,
    pub report: EvalReport,
}

fn features(backbone: &Backbone, set: &SampleSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len() * HIDDEN);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(INFERENCE_BATCH) {
        let x = backbone.preprocess(&set.batch(chunk)?)?;
        out.extend_from_slice(&backbone.features(&x, Mode::Eval)?.data());
    }
    Ok(out)
}

fn feature_batch(f: &[f64], idx: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(idx.len() * HIDDEN);
    for &i in idx {
        data.extend_from_slice(&f[i * HIDDEN..(i + 1) * HIDDEN]);
    }
    Ok(Tensor::from_vec(data, &[idx.len(), HIDDEN])?)
}

fn head_eval(backbone: &Backbone, f: &[f64], labels: &[usize]) -> Result<(Vec<usize>, f64, f64)> {
    if labels.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let idx: Vec<usize> = (0..labels.len()).collect();
    let logits = backbone.head(&feature_batch(f, &idx)?)?;
    let k = backbone.classes.len();
    let d = logits.data().clone();
    let preds = (0..labels.len()).map(|i| argmax(&d[i * k..(i + 1) * k])).collect();
    let (loss, acc) = loss_and_accuracy(&LogitBatch { classes: backbone.classes.clone(), values: d }, labels)?;
    Ok((preds, loss, acc))
}

/// Trains a fresh final layer on frozen-trunk features of three-channel
/// images and evaluates it on the test split.
pub fn train_head_prepared(
    mapping: &str,
    backbone: &mut Backbone,
    data: &PreparedSplits,
    cfg: &TrainConfig,
    snapshot: &str,
) -> Result<TransferOutcome> {
    if !backbone.trunk_frozen() {
        return Err(Error::Protocol("head training requires a frozen backbone trunk".into()));
    }
    let digest = backbone.trunk_digest();
    backbone.replace_final_layer(&data.classes, head_seed(cfg))?;
    let backbone = &*backbone;
    let train_f = features(backbone, &data.train)?;
    let val_f = features(backbone, &data.val)?;
    let test_f = features(backbone, &data.test)?;
    let params = backbone.head_params();
    let log = fit(
        cfg,
        &params,
        data.train.len(),
        |idx| {
            let logits = backbone.head(&feature_batch(&train_f, idx)?)?;
            let labels = data.train.labels_of(idx);
            let ok = correct(&logits, &labels);
            Ok((ops::softmax_cross_entropy(&logits, &labels)?, ok))
        },
        || {
            if data.val.is_empty() {
                return Ok(None);
            }
            head_eval(backbone, &val_f, &data.val.labels).map(|(_, l, a)| Some((l, a)))
        },
        || vec![Checkpoint::from_params(&params)],
        |s| Ok(s[0].load_into(&params)?),
    )?;
    if data.test.is_empty() {
        return Err(Error::Data("the test split is empty".into()));
    }
    let (preds, _, _) = head_eval(backbone, &test_f, &data.test.labels)?;
    let report = EvalReport::from_predictions(mapping, &data.classes, &data.test.labels, &preds, &digest, snapshot)?;
    Ok(TransferOutcome { log, report })
}

/// Phase 2: the mapping (hand-crafted, or a frozen colorizer) and the trunk
/// stay fixed; only a new final layer is trained on the testbed. An
/// instance-level split is drawn when the manifest carries none.
pub fn transfer_phase2(
    mapping: DepthMapping,
    backbone: &mut Backbone,
    testbed: &DatasetManifest,
    exp: &ExperimentConfig,
) -> Result<TransferOutcome> {
    if let DepthMapping::Deco(d) = mapping {
        if !d.is_frozen() {
            return Err(Error::Protocol("phase 2 requires a frozen colorization network".into()));
        }
    }
    if !backbone.trunk_frozen() {
        return Err(Error::Protocol("phase 2 requires a frozen backbone trunk".into()));
    }
    let cfg = exp.train(Phase::Phase2);
    let m = require_split(testbed, exp, SplitMode::Instance, cfg.seed)?;
    let data = mapping.prepare(&m, &exp.data, &exp.maps)?;
    train_head_prepared(mapping.name(), backbone, &data, &cfg, &exp.to_toml())
}

pub struct FinetuneOutcome {
    pub log: TrainLog,
    pub report: EvalReport,
    pub trunk_changed: bool,
}

/// Trains every backbone layer on three-channel images; the trunk is
/// unfrozen for the duration.
pub fn finetune_prepared(
    mapping: &str,
    backbone: &mut Backbone,
    data: &PreparedSplits,
    cfg: &TrainConfig,
    snapshot: &str,
) -> Result<FinetuneOutcome> {
    let digest = backbone.trunk_digest();
    let before = backbone.trunk_fingerprint();
    if backbone.classes != data.classes {
        backbone.replace_final_layer(&data.classes, head_seed(cfg))?;
    }
    backbone.unfreeze_trunk();
    if backbone.trunk_frozen() {
        return Err(Error::Protocol("finetuning requires an unfrozen trunk".into()));
    }
    let backbone = &*backbone;
    let params = backbone.params();
    let log = fit(
        cfg,
        &params,
        data.train.len(),
        |idx| {
            let logits = backbone.forward(&data.train.batch(idx)?, Mode::Train)?;
            let labels = data.train.labels_of(idx);
            let ok = correct(&logits, &labels);
            Ok((ops::softmax_cross_entropy(&logits, &labels)?, ok))
        },
        || {
            if data.val.is_empty() {
                return Ok(None);
            }
            loss_and_accuracy(&chain_logits(None, backbone, &data.val)?, &data.val.labels).map(Some)
        },
        || vec![backbone.checkpoint()],
        |s| {
            // Reload through a scratch copy: `load_checkpoint` needs `&mut`
            // only for the channel mean, which finetuning never changes.
            crate::nn::load_state(&s[0], &backbone.params(), &backbone.norms())
        },
    )?;
    let preds = chain_logits(None, backbone, &data.test)?.argmax();
    let report = EvalReport::from_predictions(mapping, &data.classes, &data.test.labels, &preds, &digest, snapshot)?;
    Ok(FinetuneOutcome {
        log,
        report,
        trunk_changed: backbone.trunk_fingerprint() != before,
    })
}

/// Finetuning with a fixed mapping. A colorizer must be frozen and stays
/// bitwise unchanged.
pub fn finetune(
    mapping: DepthMapping,
    backbone: &mut Backbone,
    manifest: &DatasetManifest,
    exp: &ExperimentConfig,
) -> Result<FinetuneOutcome> {
    if let DepthMapping::Deco(d) = mapping {
        if !d.is_frozen() {
            return Err(Error::Protocol("finetuning keeps the colorization network frozen".into()));
        }
    }
    let cfg = exp.train(Phase::Finetune);
    let m = require_split(manifest, exp, SplitMode::Instance, cfg.seed)?;
    let data = mapping.prepare(&m, &exp.data, &exp.maps)?;
    finetune_prepared(mapping.name(), backbone, &data, &cfg, &exp.to_toml())
}

/// Warning text when finetuning underperforms the frozen feature extractor.
pub fn finetune_ordering_warning(frozen: &EvalReport, finetuned: &EvalReport) -> Option<String> {
    (finetuned.accuracy < frozen.accuracy).then(|| {
        format!(
            "warning: finetuned accuracy {:.4} is below frozen-feature accuracy {:.4} for {}",
            finetuned.accuracy, frozen.accuracy, finetuned.mapping
        )
    })
}

pub struct PretrainOutcome {
    pub backbone: Backbone,
    pub log: TrainLog,
    pub val_accuracy: f64,
}

/// Trains a backbone from scratch on RGB images and enforces the accuracy
/// gate on the validation split.
pub fn pretrain_prepared(data: &PreparedSplits, bcfg: &BackboneConfig, cfg: &TrainConfig) -> Result<PretrainOutcome> {
    if data.classes.len() < 2 {
        return Err(Error::Data(format!(
            "pretraining needs at least two classes, found {}",
            data.classes.len()
        )));
    }
    if data.val.is_empty() {
        return Err(Error::Data("pretraining needs a non-empty validation split".into()));
    }
    let mut backbone = Backbone::new(bcfg, &data.classes, cfg.seed)?;
    let mean = data.train.channel_mean(1.0 / 255.0);
    backbone.channel_mean.copy_from_slice(&mean);
    let b = &backbone;
    let params = b.params();
    let log = fit(
        cfg,
        &params,
        data.train.len(),
        |idx| {
            let logits = b.forward(&data.train.batch(idx)?, Mode::Train)?;
            let labels = data.train.labels_of(idx);
            let ok = correct(&logits, &labels);
            Ok((ops::softmax_cross_entropy(&logits, &labels)?, ok))
        },
        || loss_and_accuracy(&chain_logits(None, b, &data.val)?, &data.val.labels).map(Some),
        || vec![b.checkpoint()],
        |s| crate::nn::load_state(&s[0], &b.params(), &b.norms()),
    )?;
    let val_accuracy = log.best().val_accuracy.expect("validation ran every epoch");
    if val_accuracy < PRETRAIN_MIN_ACCURACY {
        return Err(Error::Training(format!(
            "backbone pretraining reached validation accuracy {val_accuracy:.4} < {PRETRAIN_MIN_ACCURACY}; \
             train for more epochs or generate more data"
        )));
    }
    Ok(PretrainOutcome {
        backbone,
        log,
        val_accuracy,
    })
}

pub fn pretrain_backbone(rgb: &DatasetManifest, exp: &ExperimentConfig) -> Result<PretrainOutcome> {
    let cfg = exp.train(Phase::Pretrain);
    if rgb.classes().len() < 2 {
        return Err(Error::Data("pretraining needs at least two classes".into()));
    }
    let m = require_split(rgb, exp, SplitMode::Sample, cfg.seed)?;
    let data = prepare(&m, InputKind::Rgb, &exp.data, &exp.maps)?;
    pretrain_prepared(&data, &exp.backbone, &cfg)
}

/// Evaluates a mapping plus a trained backbone on the test split.
pub fn evaluate(
    mapping: DepthMapping,
    backbone: &Backbone,
    manifest: &DatasetManifest,
    exp: &ExperimentConfig,
) -> Result<EvalReport> {
    let m = require_split(manifest, exp, SplitMode::Instance, exp.seed)?;
    let data = mapping.prepare(&m, &exp.data, &exp.maps)?;
    evaluate_prepared(mapping.name(), backbone, &data, &exp.to_toml())
}

pub fn evaluate_prepared(mapping: &str, backbone: &Backbone, data: &PreparedSplits, snapshot: &str) -> Result<EvalReport> {
    if backbone.classes != data.classes {
        return Err(Error::Data(format!(
            "backbone classes {:?} do not match dataset classes {:?}",
            backbone.classes, data.classes
        )));
    }
    let preds = chain_logits(None, backbone, &data.test)?.argmax();
    EvalReport::from_predictions(mapping, &data.classes, &data.test.labels, &preds, &backbone.trunk_digest(), snapshot)
}
