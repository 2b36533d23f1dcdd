use deco_core::backbone::{Backbone, BackboneConfig};
use deco_core::deco::{build_deco, gray_batch, DecoConfig};
use deco_core::raster::GrayImage;
use deco_tensor::ops::{self, Mode};
use deco_tensor::{SolverKind, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(b: usize, s: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_vec((0..b * s * s).map(|_| rng.random::<f64>()).collect(), &[b, 1, s, s]).unwrap()
}

fn classes(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

#[test]
fn stem_at_228_is_64_by_57_by_57() {
    let m = build_deco(&DecoConfig::new(228, 8, 64), 1).unwrap();
    let y = m.stem_forward(&random_input(1, 228, 2), Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[1, 64, 57, 57]);
}

#[test]
fn forward_64_two_blocks_eight_filters() {
    let m = build_deco(&DecoConfig::new(64, 2, 8), 1).unwrap();
    let y = m.forward(&random_input(1, 64, 3), Mode::Train).unwrap();
    assert_eq!(y.shape(), &[1, 3, 64, 64]);
}

#[test]
fn parameter_count_by_enumeration() {
    let cfg = DecoConfig::new(64, 4, 32);
    let m = build_deco(&cfg, 0).unwrap();
    // Layer-by-layer shapes written out independently of the builder.
    let f = 32;
    let mut expected: Vec<Vec<usize>> = vec![vec![f, 1, 7, 7], vec![f], vec![f]];
    for _ in 0..4 {
        expected.extend([vec![f, f, 3, 3], vec![f], vec![f], vec![f, f, 3, 3], vec![f], vec![f]]);
    }
    expected.extend([vec![3, f, 3, 3], vec![3], vec![3, 3, 8, 8]]);
    let got: Vec<Vec<usize>> = m.params().iter().map(|p| p.shape().to_vec()).collect();
    assert_eq!(got, expected);
    let total: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
    assert_eq!(total, 1568 + 64 + 4 * (2 * 9216 + 128) + 864 + 3 + 576);
    assert_eq!(m.parameter_count(), total);
    assert_eq!(cfg.parameter_count(), total);
}

#[test]
fn zeroed_block_is_leaky_identity() {
    let cfg = DecoConfig::new(16, 2, 8);
    let m = build_deco(&cfg, 4).unwrap();
    let b = &m.blocks[1];
    for p in [&b.conv1.weight, &b.conv2.weight, &b.bn1.gamma, &b.bn2.gamma, &b.bn1.beta, &b.bn2.beta] {
        p.assign(&vec![0.0; p.tensor().numel()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Tensor::from_vec((0..2 * 8 * 4 * 4).map(|_| rng.random_range(-3.0..3.0)).collect(), &[2, 8, 4, 4]).unwrap();
    for mode in [Mode::Train, Mode::Eval] {
        let y = b.forward(&x, mode, cfg.leaky_slope).unwrap();
        let want = ops::leaky_relu(&x, cfg.leaky_slope);
        let dev = y.to_vec().iter().zip(want.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "{mode:?}: {dev}");
    }
}

#[test]
fn classification_loss_reaches_every_parameter() {
    let deco = build_deco(&DecoConfig::new(16, 2, 8), 11).unwrap();
    let bb = Backbone::new(&BackboneConfig { input_size: 16, ..Default::default() }, &classes(3), 12).unwrap();
    bb.freeze_trunk();
    let y = deco.forward(&random_input(4, 16, 13), Mode::Train).unwrap();
    let logits = bb.forward(&y, Mode::Eval).unwrap();
    ops::softmax_cross_entropy(&logits, &[0, 1, 2, 1]).unwrap().backward().unwrap();
    for p in deco.params() {
        let g = p.tensor().grad().unwrap_or_default();
        assert!(g.iter().any(|v| *v != 0.0), "{} got no gradient", p.name());
    }
    for p in bb.trunk_params() {
        assert!(p.tensor().grad().is_none_or(|g| g.iter().all(|v| *v == 0.0)), "{} is frozen", p.name());
    }
}

#[test]
fn frozen_model_survives_optimizer_steps() {
    let deco = build_deco(&DecoConfig::new(16, 1, 4), 2).unwrap();
    deco.set_frozen(true);
    let before = deco.digest();
    let params = deco.params();
    for kind in [SolverKind::Nesterov, SolverKind::SgdMomentum, SolverKind::Adam] {
        let mut opt = deco_tensor::OptimizerState::new(kind, 0.1, 0.9).unwrap();
        for step in 0..5 {
            let y = deco.forward(&random_input(2, 16, step), Mode::Eval).unwrap();
            ops::mean(&y).backward().unwrap();
            opt.step(&params).unwrap();
        }
    }
    assert_eq!(deco.digest(), before);
}

#[test]
fn colorize_image_is_a_deterministic_square_image() {
    let m = build_deco(&DecoConfig::new(32, 1, 4), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = GrayImage::new(23, 41, (0..23 * 41).map(|_| rng.random()).collect()).unwrap();
    let a = m.colorize_image(&g).unwrap();
    assert_eq!((a.width, a.height, a.data.len()), (32, 32, 32 * 32 * 3));
    assert_eq!(a, m.colorize_image(&g).unwrap());
}

#[test]
fn identical_inputs_identical_outputs() {
    let m = build_deco(&DecoConfig::new(16, 2, 4), 5).unwrap();
    let g = GrayImage::new(16, 16, (0..256).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
    let y = m.forward(&gray_batch(&[g.clone(), g], 16).unwrap(), Mode::Eval).unwrap().to_vec();
    let n = 3 * 16 * 16;
    assert_eq!(&y[..n], &y[n..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn output_strictly_inside_byte_range(seed in any::<u64>(), blocks in 1usize..3, filters in 1usize..6, train in any::<bool>()) {
        let m = build_deco(&DecoConfig::new(16, blocks, filters), seed).unwrap();
        let mode = if train { Mode::Train } else { Mode::Eval };
        let y = m.forward(&random_input(2, 16, seed ^ 1), mode).unwrap();
        prop_assert_eq!(y.shape(), &[2, 3, 16, 16]);
        prop_assert!(y.to_vec().iter().all(|v| *v > 0.0 && *v < 255.0));
    }

    #[test]
    fn shape_law_small_sizes(q in 4usize..12, seed in any::<u64>()) {
        let s = 4 * q;
        let m = build_deco(&DecoConfig::new(s, 1, 2), seed).unwrap();
        let y = m.forward(&random_input(1, s, seed), Mode::Eval).unwrap();
        prop_assert_eq!(y.shape(), &[1, 3, s, s]);
    }
}
