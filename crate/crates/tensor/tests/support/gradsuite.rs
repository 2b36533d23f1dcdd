//! Finite-difference checks for every differentiable op, each reduced to a
//! scalar through a fixed random projection.
#![allow(dead_code)]

use deco_tensor::gradcheck::check_gradients;
use deco_tensor::ops::{self, Mode, RunningStats};
use deco_tensor::Tensor;

use super::oracles::random_vec;

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-4;

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    Tensor::from_vec(random_vec(shape.iter().product(), seed), shape).unwrap()
}

/// Values that stay at least `gap` apart so that no max-pool window has a
/// near tie and no leaky-ReLU input sits within `gap` of the kink.
fn spread_t(shape: &[usize], seed: u64, gap: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let noise = random_vec(n, seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| noise[a].partial_cmp(&noise[b]).unwrap());
    let mut vals = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        let v = (rank as f64 - n as f64 / 2.0 + 0.5) * gap * 2.0;
        vals[idx] = v;
    }
    Tensor::from_vec(vals, shape).unwrap()
}

fn project(y: &Tensor, seed: u64) -> deco_tensor::Result<Tensor> {
    ops::dot_const(y, &random_vec(y.numel(), seed ^ 0xabc))
}

/// Runs every op check for one seed, returning (op name, max relative error).
pub fn op_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let s = seed * 100;
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&[Tensor]) -> deco_tensor::Result<Tensor>| {
        let ins = inputs.clone();
        let rep = check_gradients(&inputs, || f(&ins), STEP, FLOOR, None).unwrap();
        out.push((name, rep.max_rel_err));
    };

    run("conv2d", vec![rand_t(&[2, 2, 5, 5], s + 1), rand_t(&[3, 2, 3, 3], s + 2), rand_t(&[3], s + 3)], &|t| {
        project(&ops::conv2d(&t[0], &t[1], Some(&t[2]), 2, 1)?, s)
    });
    run("transposed_conv2d", vec![rand_t(&[2, 2, 3, 3], s + 4), rand_t(&[2, 3, 4, 4], s + 5)], &|t| {
        project(&ops::transposed_conv2d(&t[0], &t[1], 2, 1)?, s + 1)
    });
    run("maxpool2d", vec![spread_t(&[2, 2, 6, 6], s + 6, 0.01)], &|t| {
        project(&ops::maxpool2d(&t[0], 3, 2, 1)?, s + 2)
    });
    run("batch_norm2d/train", vec![rand_t(&[3, 2, 3, 3], s + 7), rand_t(&[2], s + 8), rand_t(&[2], s + 9)], &|t| {
        let mut stats = RunningStats::new(2);
        project(&ops::batch_norm2d(&t[0], &t[1], &t[2], &mut stats, Mode::Train, 1e-5, 0.1)?, s + 3)
    });
    run("batch_norm2d/eval", vec![rand_t(&[2, 2, 3, 3], s + 10), rand_t(&[2], s + 11), rand_t(&[2], s + 12)], &|t| {
        let mut stats = RunningStats { mean: vec![0.3, -0.2], var: vec![0.5, 2.0] };
        project(&ops::batch_norm2d(&t[0], &t[1], &t[2], &mut stats, Mode::Eval, 1e-5, 0.1)?, s + 4)
    });
    run("leaky_relu", vec![spread_t(&[4, 5], s + 13, 0.01)], &|t| project(&ops::leaky_relu(&t[0], 0.2), s + 5));
    run("linear", vec![rand_t(&[3, 4], s + 14), rand_t(&[5, 4], s + 15), rand_t(&[5], s + 16)], &|t| {
        project(&ops::linear(&t[0], &t[1], &t[2])?, s + 6)
    });
    run("softmax_cross_entropy", vec![rand_t(&[4, 5], s + 17)], &|t| {
        ops::softmax_cross_entropy(&ops::scale(&t[0], 3.0), &[0, 4, 2, 2])
    });
    run("sigmoid", vec![rand_t(&[3, 4], s + 18)], &|t| project(&ops::sigmoid(&ops::scale(&t[0], 4.0)), s + 7));
    run("add/mul", vec![rand_t(&[6], s + 19), rand_t(&[6], s + 20)], &|t| {
        project(&ops::mul(&ops::add(&t[0], &t[1])?, &t[1])?, s + 8)
    });
    run("affine/shift/flatten", vec![rand_t(&[2, 3, 2, 2], s + 21)], &|t| {
        let y = ops::shift_channels(&ops::affine(&t[0], 1.7, -0.3), &[0.1, 0.2, 0.3])?;
        project(&ops::flatten(&y)?, s + 9)
    });
    run("normalize_rows", vec![rand_t(&[3, 5], s + 23)], &|t| {
        project(&ops::normalize_rows(&t[0], 4.0, 1e-6)?, s + 10)
    });
    run("mean", vec![rand_t(&[7], s + 22)], &|t| {
        Ok(ops::mean(&ops::mul(&t[0], &t[0])?))
    });
    out
}
