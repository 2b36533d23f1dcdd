//! Exhaustive shape sweeps comparing library kernels with the naive oracles.
//! Each returns the largest absolute deviation observed.
#![allow(dead_code)]

use deco_tensor::ops;
use deco_tensor::Tensor;

use super::oracles;

const BATCHES: [usize; 2] = [1, 2];
const CHANNELS: [usize; 3] = [1, 3, 4];
const EXTENTS: [usize; 3] = [3, 5, 8];
const KERNELS: [usize; 3] = [1, 2, 3];

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn conv2d_sweep() -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 0;
    for &b in &BATCHES {
        for &ci in &CHANNELS {
            for &co in &CHANNELS {
                for &h in &EXTENTS {
                    for &w in &EXTENTS {
                        for &k in &KERNELS {
                            for stride in 1..=2 {
                                for pad in 0..=1 {
                                    seed += 1;
                                    let xv = oracles::random_vec(b * ci * h * w, seed);
                                    let kv = oracles::random_vec(co * ci * k * k, seed + 10_000);
                                    let bv = oracles::random_vec(co, seed + 20_000);
                                    let x = Tensor::from_vec(xv.clone(), &[b, ci, h, w]).unwrap();
                                    let kt = Tensor::from_vec(kv.clone(), &[co, ci, k, k]).unwrap();
                                    let bt = Tensor::from_vec(bv.clone(), &[co]).unwrap();
                                    let y = ops::conv2d(&x, &kt, Some(&bt), stride, pad).unwrap();
                                    let (want, oh, ow) = oracles::conv2d(
                                        &xv,
                                        (b, ci, h, w),
                                        &kv,
                                        (co, k),
                                        Some(&bv),
                                        stride,
                                        pad,
                                    );
                                    assert_eq!(y.shape(), &[b, co, oh, ow]);
                                    worst = worst.max(max_dev(&y.to_vec(), &want));
                                    cases += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (worst, cases)
}

pub fn transposed_conv2d_sweep() -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 50_000;
    for &b in &BATCHES {
        for &ci in &CHANNELS {
            for &co in &CHANNELS {
                for &h in &EXTENTS {
                    for &w in &EXTENTS {
                        for &k in &KERNELS {
                            for stride in 1..=2 {
                                for pad in 0..k.min(2) {
                                    seed += 1;
                                    let xv = oracles::random_vec(b * ci * h * w, seed);
                                    let kv = oracles::random_vec(ci * co * k * k, seed + 10_000);
                                    let x = Tensor::from_vec(xv.clone(), &[b, ci, h, w]).unwrap();
                                    let kt = Tensor::from_vec(kv.clone(), &[ci, co, k, k]).unwrap();
                                    let y = ops::transposed_conv2d(&x, &kt, stride, pad).unwrap();
                                    let (want, oh, ow) = oracles::transposed_conv2d(
                                        &xv,
                                        (b, ci, h, w),
                                        &kv,
                                        (co, k),
                                        stride,
                                        pad,
                                    );
                                    assert_eq!(y.shape(), &[b, co, oh, ow]);
                                    worst = worst.max(max_dev(&y.to_vec(), &want));
                                    cases += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (worst, cases)
}

pub fn maxpool2d_sweep() -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut seed = 90_000;
    for &b in &BATCHES {
        for &c in &CHANNELS {
            for &h in &EXTENTS {
                for &w in &EXTENTS {
                    for k in 2..=3 {
                        for stride in 1..=2 {
                            for pad in 0..=1 {
                                seed += 1;
                                let xv = oracles::random_vec(b * c * h * w, seed);
                                let x = Tensor::from_vec(xv.clone(), &[b, c, h, w]).unwrap();
                                let y = ops::maxpool2d(&x, k, stride, pad).unwrap();
                                let (want, oh, ow) =
                                    oracles::maxpool2d(&xv, (b * c, h, w), k, stride, pad);
                                assert_eq!(y.shape(), &[b, c, oh, ow]);
                                worst = worst.max(max_dev(&y.to_vec(), &want));
                                cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    (worst, cases)
}

/// Largest relative violation of <conv(x, W), y> = <x, convᵀ(y, W)>.
pub fn adjoint_sweep(seeds: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        for &(b, ci, co, h, k, stride, pad) in &[
            (1, 1, 1, 5, 3, 1, 0),
            (2, 3, 2, 7, 3, 2, 1),
            (1, 4, 3, 8, 2, 2, 0),
            (2, 2, 4, 8, 3, 1, 1),
            (1, 1, 3, 16, 8, 4, 2),
        ] {
            let xv = oracles::random_vec(b * ci * h * h, seed * 7 + 1);
            let kv = oracles::random_vec(co * ci * k * k, seed * 7 + 2);
            let x = Tensor::from_vec(xv.clone(), &[b, ci, h, h]).unwrap();
            let kt = Tensor::from_vec(kv, &[co, ci, k, k]).unwrap();
            let y_fwd = ops::conv2d(&x, &kt, None, stride, pad).unwrap();
            let yv = oracles::random_vec(y_fwd.numel(), seed * 7 + 3);
            let y = Tensor::from_vec(yv.clone(), y_fwd.shape()).unwrap();
            let xt = ops::transposed_conv2d(&y, &kt, stride, pad).unwrap();
            assert_eq!(xt.shape(), x.shape());
            let lhs: f64 = y_fwd.to_vec().iter().zip(&yv).map(|(a, b)| a * b).sum();
            let rhs: f64 = xv.iter().zip(xt.to_vec()).map(|(a, b)| a * b).sum();
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    }
    worst
}
