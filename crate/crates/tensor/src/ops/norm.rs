use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running estimates used in eval mode. Starts at mean 0, var 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Batch normalization over `[B, C, H, W]`.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into `stats` with `running = (1 − momentum)·running +
/// momentum·batch`. Eval mode normalizes with `stats` and leaves them alone.
pub fn batch_norm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
    epsilon: f64,
    momentum: f64,
) -> Result<Tensor> {
    let s = input.shape().to_vec();
    let [b, c, h, w] = s[..] else {
        return Err(TensorError::shape(
            "batch_norm2d",
            format!("expected [B,C,H,W], got {s:?}"),
        ));
    };
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c || stats.var.len() != c {
        return Err(TensorError::shape(
            "batch_norm2d",
            format!("affine/stat vectors must have {c} entries"),
        ));
    }
    let plane = h * w;
    let count = (b * plane) as f64;
    let x = input.data();
    let gm = gamma.data().clone();
    let bt = beta.data().clone();

    let (mean, inv_std) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for n in 0..b {
                for ch in 0..c {
                    let off = (n * c + ch) * plane;
                    mean[ch] += x[off..off + plane].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for n in 0..b {
                for ch in 0..c {
                    let off = (n * c + ch) * plane;
                    var[ch] += x[off..off + plane]
                        .iter()
                        .map(|v| (v - mean[ch]).powi(2))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for ch in 0..c {
                stats.mean[ch] = (1.0 - momentum) * stats.mean[ch] + momentum * mean[ch];
                stats.var[ch] = (1.0 - momentum) * stats.var[ch] + momentum * var[ch] * unbias;
            }
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
            (mean, inv)
        }
        Mode::Eval => (
            stats.mean.clone(),
            stats.var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect(),
        ),
    };

    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for n in 0..b {
        for ch in 0..c {
            let off = (n * c + ch) * plane;
            for i in off..off + plane {
                xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                out[i] = xhat[i] * gm[ch] + bt[ch];
            }
        }
    }
    drop(x);

    let (xt, gt, bt_t) = (input.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        out,
        s.clone(),
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let mut sum_dy = vec![0.0; c];
            let mut sum_dy_xhat = vec![0.0; c];
            for n in 0..b {
                for ch in 0..c {
                    let off = (n * c + ch) * plane;
                    for i in off..off + plane {
                        sum_dy[ch] += g[i];
                        sum_dy_xhat[ch] += g[i] * xhat[i];
                    }
                }
            }
            let gx = xt.requires_grad().then(|| {
                let mut gx = vec![0.0; g.len()];
                for n in 0..b {
                    for ch in 0..c {
                        let off = (n * c + ch) * plane;
                        let scale = gm[ch] * inv_std[ch];
                        for i in off..off + plane {
                            gx[i] = match mode {
                                Mode::Train => {
                                    scale
                                        * (g[i]
                                            - sum_dy[ch] / count
                                            - xhat[i] * sum_dy_xhat[ch] / count)
                                }
                                Mode::Eval => scale * g[i],
                            };
                        }
                    }
                }
                gx
            });
            let gg = gt.requires_grad().then(|| sum_dy_xhat.clone());
            let gb = bt_t.requires_grad().then(|| sum_dy.clone());
            vec![gx, gg, gb]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_moments(v: &[f64], b: usize, c: usize, plane: usize, ch: usize) -> (f64, f64) {
        let vals: Vec<f64> = (0..b)
            .flat_map(|n| v[(n * c + ch) * plane..(n * c + ch + 1) * plane].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, var)
    }

    #[test]
    fn train_mode_standardizes_channels() {
        let data: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| ((i * 37) % 23) as f64 * 0.7 - 3.0).collect();
        let x = Tensor::from_vec(data, &[2, 3, 4, 4]).unwrap();
        let mut stats = RunningStats::new(3);
        let y = batch_norm2d(
            &x,
            &Tensor::full(&[3], 1.0),
            &Tensor::zeros(&[3]),
            &mut stats,
            Mode::Train,
            0.0,
            0.1,
        )
        .unwrap();
        let out = y.to_vec();
        for ch in 0..3 {
            let (m, v) = channel_moments(&out, 2, 3, 16, ch);
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-6);
        }
        assert_ne!(stats, RunningStats::new(3));
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::full(&[2, 2, 3, 3], 4.25);
        let beta = Tensor::from_vec(vec![0.5, -1.5], &[2]).unwrap();
        let mut stats = RunningStats::new(2);
        let y = batch_norm2d(&x, &Tensor::full(&[2], 1.0), &beta, &mut stats, Mode::Train, 1e-5, 0.1)
            .unwrap();
        for (i, v) in y.to_vec().iter().enumerate() {
            let ch = (i / 9) % 2;
            assert!((v - beta.to_vec()[ch]).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_before_update_uses_identity_stats() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let mut stats = RunningStats::new(1);
        let y = batch_norm2d(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &mut stats, Mode::Eval, 0.0, 0.1)
            .unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
        assert_eq!(stats, RunningStats::new(1));
    }
}
