//! Naive reference implementations. Written directly from the definitions,
//! sharing no code with the library kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Direct cross-correlation: x [b, ci, h, w], k [co, ci, kh, kw].
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (b, ci, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (co, kk): (usize, usize),
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = vec![0.0; b * co * oh * ow];
    for n in 0..b {
        for o in 0..co {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..ci {
                        for i in 0..kk {
                            for j in 0..kk {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xo * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((n * ci + c) * h + iy as usize) * w + ix as usize]
                                    * k[((o * ci + c) * kk + i) * kk + j];
                            }
                        }
                    }
                    out[((n * co + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Scatter definition of the transposed convolution: every input element
/// stamps a scaled copy of its kernel onto the (cropped) output.
/// x [b, ci, h, w], k [ci, co, kk, kk].
pub fn transposed_conv2d(
    x: &[f64],
    (b, ci, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (co, kk): (usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h - 1) * stride + kk - 2 * pad;
    let ow = (w - 1) * stride + kk - 2 * pad;
    let mut out = vec![0.0; b * co * oh * ow];
    for n in 0..b {
        for c in 0..ci {
            for y in 0..h {
                for xx in 0..w {
                    let v = x[((n * ci + c) * h + y) * w + xx];
                    for o in 0..co {
                        for i in 0..kk {
                            for j in 0..kk {
                                let oy = (y * stride + i) as isize - pad as isize;
                                let ox = (xx * stride + j) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((n * co + o) * oh + oy as usize) * ow + ox as usize] +=
                                    v * k[((c * co + o) * kk + i) * kk + j];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

/// Windowed max over [planes, h, w]; padded cells are ignored.
pub fn maxpool2d(
    x: &[f64],
    (planes, h, w): (usize, usize, usize),
    kk: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = Vec::new();
    for p in 0..planes {
        for y in 0..oh {
            for xo in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for i in 0..kk {
                    for j in 0..kk {
                        let iy = (y * stride + i) as isize - pad as isize;
                        let ix = (xo * stride + j) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            m = m.max(x[(p * h + iy as usize) * w + ix as usize]);
                        }
                    }
                }
                out.push(m);
            }
        }
    }
    (out, oh, ow)
}
