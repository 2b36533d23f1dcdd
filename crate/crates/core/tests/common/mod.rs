//! Small synthetic datasets and configs shared by the integration tests.
#![allow(dead_code)]

use deco_core::data::synth::{write_dataset, ShapeKind, SynthConfig};
use deco_core::data::{DatasetManifest, SplitMode};
use deco_core::pipeline::{prepare, ExperimentConfig, InputKind, PreparedSplits};
use tempfile::TempDir;

/// Experiment config with every image size set to `size`.
pub fn experiment(size: usize, seed: u64) -> ExperimentConfig {
    let mut exp = ExperimentConfig::default();
    exp.seed = seed;
    exp.data.image_size = size;
    exp.deco.input_size = size;
    exp.backbone.input_size = size;
    exp
}

pub struct Synth {
    pub dir: TempDir,
    pub manifest: DatasetManifest,
}

pub fn synth(classes: &[ShapeKind], instances: usize, samples: usize, size: usize, seed: u64) -> Synth {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        size,
        ..SynthConfig::new(classes, instances, samples, seed)
    };
    let manifest = write_dataset(&cfg, dir.path()).unwrap();
    Synth { dir, manifest }
}

pub fn splits(s: &Synth, mode: SplitMode, split_seed: u64, kind: InputKind, exp: &ExperimentConfig) -> PreparedSplits {
    let m = s.manifest.make_split(split_seed, exp.data.val_fraction, mode).unwrap();
    prepare(&m, kind, &exp.data, &exp.maps).unwrap()
}

pub fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("class{i}")).collect()
}

pub const PRETRAIN_SHAPES: [ShapeKind; 5] =
    [ShapeKind::SphereCap, ShapeKind::Box, ShapeKind::Cone, ShapeKind::Ramp, ShapeKind::Torus];
pub const REFERENCE_SHAPES: [ShapeKind; 3] = [ShapeKind::SphereCap, ShapeKind::Box, ShapeKind::Cone];
pub const TESTBED_SHAPES: [ShapeKind; 4] =
    [ShapeKind::Cylinder, ShapeKind::Pyramid, ShapeKind::Saddle, ShapeKind::Wave];
