use super::conv::conv_out_extent;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Windowed maximum over each channel. Padded positions never win. Backward
/// routes each output gradient to the first (row-major) maximum of its window.
pub fn maxpool2d(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let s = input.shape().to_vec();
    let (planes, h, w) = match *s.as_slice() {
        [c, h, w] => (c, h, w),
        [b, c, h, w] => (b * c, h, w),
        _ => {
            return Err(TensorError::shape(
                "maxpool2d",
                format!("expected [C,H,W] or [B,C,H,W], got {s:?}"),
            ))
        }
    };
    if padding >= kernel {
        return Err(TensorError::shape(
            "maxpool2d",
            format!("padding {padding} must be smaller than kernel {kernel}"),
        ));
    }
    let (Some(oh), Some(ow)) = (
        conv_out_extent(h, kernel, stride, padding),
        conv_out_extent(w, kernel, stride, padding),
    ) else {
        return Err(TensorError::shape(
            "maxpool2d",
            format!("kernel {kernel} stride {stride} padding {padding} does not fit {h}x{w}"),
        ));
    };

    let x = input.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if best_idx == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    drop(x);

    let mut shape = s[..s.len() - 2].to_vec();
    shape.extend([oh, ow]);
    let n_in = input.numel();
    Ok(Tensor::from_op(
        out,
        shape,
        vec![input.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; n_in];
            for (gv, &idx) in g.iter().zip(&argmax) {
                gx[idx] += gv;
            }
            vec![Some(gx)]
        }),
    ))
}
