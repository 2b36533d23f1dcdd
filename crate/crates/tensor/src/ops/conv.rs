//! 2-D convolution and its adjoint, via im2col + GEMM.
//!
//! Layout is NCHW. Unbatched `[C, H, W]` inputs are accepted and produce
//! unbatched outputs.

use super::gemm::{gemm, Op};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output extent of a strided window sweep, `None` when the kernel does not
/// fit inside the padded input.
pub fn conv_out_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Unfolds every receptive field of `img: [C, H, W]` into the columns of a
/// `[C·k·k, out_h·out_w]` matrix. Padding reads as zero.
fn im2col(img: &[f64], g: &Geometry, col: &mut [f64]) {
    let cols = g.col_cols();
    let (k, s, p) = (g.kernel, g.stride as isize, g.padding as isize);
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ki as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize * s - p + kj as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatters-and-adds columns back into `[C, H, W]`.
fn col2im(col: &[f64], g: &Geometry, img: &mut [f64]) {
    let cols = g.col_cols();
    let (k, s, p) = (g.kernel, g.stride as isize, g.padding as isize);
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = oy as isize * s - p + ki as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = ox as isize * s - p + kj as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Splits an input shape into (batch, channels, height, width) and whether it
/// carried a batch axis.
fn split_input(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w, false)),
        [b, c, h, w] => Ok((b, c, h, w, true)),
        _ => Err(TensorError::shape(
            op,
            format!("expected [C,H,W] or [B,C,H,W], got {shape:?}"),
        )),
    }
}

fn square_kernel(op: &'static str, ws: &[usize]) -> Result<usize> {
    if ws.len() != 4 || ws[2] != ws[3] {
        return Err(TensorError::shape(
            op,
            format!("expected square 4-D kernel, got {ws:?}"),
        ));
    }
    Ok(ws[2])
}

/// Cross-correlation of `input` with `weight: [C_out, C_in, k, k]`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (batch, c_in, h, w, batched) = split_input("conv2d", input.shape())?;
    let ws = weight.shape().to_vec();
    let k = square_kernel("conv2d", &ws)?;
    let c_out = ws[0];
    if ws[1] != c_in {
        return Err(TensorError::shape(
            "conv2d",
            format!("input has {c_in} channels but kernel {ws:?} expects {}", ws[1]),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(TensorError::shape(
                "conv2d",
                format!("bias {:?} for {c_out} output channels", b.shape()),
            ));
        }
    }
    let (Some(out_h), Some(out_w)) = (
        conv_out_extent(h, k, stride, padding),
        conv_out_extent(w, k, stride, padding),
    ) else {
        return Err(TensorError::shape(
            "conv2d",
            format!("kernel {k} stride {stride} padding {padding} does not fit {h}x{w}"),
        ));
    };
    let g = Geometry {
        channels: c_in,
        height: h,
        width: w,
        kernel: k,
        stride,
        padding,
        out_h,
        out_w,
    };
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_len = c_in * h * w;
    let out_len = c_out * cols;

    let mut cols_all = vec![0.0; batch * rows * cols];
    let mut out = vec![0.0; batch * out_len];
    {
        let x = input.data();
        let wd = weight.data();
        for n in 0..batch {
            let col = &mut cols_all[n * rows * cols..(n + 1) * rows * cols];
            im2col(&x[n * in_len..(n + 1) * in_len], &g, col);
            let dst = &mut out[n * out_len..(n + 1) * out_len];
            if let Some(b) = bias {
                for (co, chunk) in dst.chunks_mut(cols).enumerate() {
                    chunk.fill(b.data()[co]);
                }
            }
            gemm(c_out, rows, cols, &wd, Op::N, col, Op::N, 1.0, dst);
        }
    }

    let mut shape = vec![c_out, out_h, out_w];
    if batched {
        shape.insert(0, batch);
    }
    let (x_t, w_t, b_t) = (input.clone(), weight.clone(), bias.cloned());
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(
        out,
        shape,
        parents,
        Box::new(move |grad| {
            let gx = x_t.requires_grad().then(|| {
                let mut gx = vec![0.0; batch * in_len];
                let mut dcol = vec![0.0; rows * cols];
                let wd = w_t.data();
                for n in 0..batch {
                    let gy = &grad[n * out_len..(n + 1) * out_len];
                    gemm(rows, c_out, cols, &wd, Op::T, gy, Op::N, 0.0, &mut dcol);
                    col2im(&dcol, &g, &mut gx[n * in_len..(n + 1) * in_len]);
                }
                gx
            });
            let gw = w_t.requires_grad().then(|| {
                let mut gw = vec![0.0; c_out * rows];
                for n in 0..batch {
                    let gy = &grad[n * out_len..(n + 1) * out_len];
                    let col = &cols_all[n * rows * cols..(n + 1) * rows * cols];
                    gemm(c_out, cols, rows, gy, Op::N, col, Op::T, 1.0, &mut gw);
                }
                gw
            });
            let mut result = vec![gx, gw];
            if let Some(b) = &b_t {
                result.push(b.requires_grad().then(|| {
                    let mut gb = vec![0.0; c_out];
                    for n in 0..batch {
                        let gy = &grad[n * out_len..(n + 1) * out_len];
                        for (co, chunk) in gy.chunks(cols).enumerate() {
                            gb[co] += chunk.iter().sum::<f64>();
                        }
                    }
                    gb
                }));
            }
            result
        }),
    ))
}

/// Transposed convolution (the input-gradient of [`conv2d`]) with
/// `weight: [C_in, C_out, k, k]`. Output extent per axis is
/// `(H − 1)·stride − 2·padding + k`.
pub fn transposed_conv2d(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (batch, c_in, h, w, batched) = split_input("transposed_conv2d", input.shape())?;
    let ws = weight.shape().to_vec();
    let k = square_kernel("transposed_conv2d", &ws)?;
    if stride == 0 {
        return Err(TensorError::shape("transposed_conv2d", "stride must be >= 1"));
    }
    if ws[0] != c_in {
        return Err(TensorError::shape(
            "transposed_conv2d",
            format!("input has {c_in} channels but kernel {ws:?} expects {}", ws[0]),
        ));
    }
    let c_out = ws[1];
    let extent = |n: usize| -> Option<usize> {
        let full = (n - 1) * stride + k;
        (full > 2 * padding).then(|| full - 2 * padding)
    };
    let (Some(out_h), Some(out_w)) = (extent(h), extent(w)) else {
        return Err(TensorError::shape(
            "transposed_conv2d",
            format!("non-positive output extent for {h}x{w}, k {k}, stride {stride}, padding {padding}"),
        ));
    };
    // The geometry of the forward conv that maps the output back onto the input.
    let g = Geometry {
        channels: c_out,
        height: out_h,
        width: out_w,
        kernel: k,
        stride,
        padding,
        out_h: h,
        out_w: w,
    };
    if conv_out_extent(out_h, k, stride, padding) != Some(h)
        || conv_out_extent(out_w, k, stride, padding) != Some(w)
    {
        return Err(TensorError::shape(
            "transposed_conv2d",
            format!("padding {padding} too large for kernel {k}"),
        ));
    }
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_len = c_in * cols;
    let out_len = c_out * out_h * out_w;

    let mut out = vec![0.0; batch * out_len];
    {
        let x = input.data();
        let wd = weight.data();
        let mut col = vec![0.0; rows * cols];
        for n in 0..batch {
            gemm(rows, c_in, cols, &wd, Op::T, &x[n * in_len..(n + 1) * in_len], Op::N, 0.0, &mut col);
            col2im(&col, &g, &mut out[n * out_len..(n + 1) * out_len]);
        }
    }

    let mut shape = vec![c_out, out_h, out_w];
    if batched {
        shape.insert(0, batch);
    }
    let (x_t, w_t) = (input.clone(), weight.clone());
    Ok(Tensor::from_op(
        out,
        shape,
        vec![input.clone(), weight.clone()],
        Box::new(move |grad| {
            let need_x = x_t.requires_grad();
            let need_w = w_t.requires_grad();
            let mut gx = need_x.then(|| vec![0.0; batch * in_len]);
            let mut gw = need_w.then(|| vec![0.0; c_in * rows]);
            let mut col = vec![0.0; rows * cols];
            let wd = w_t.data();
            let x = x_t.data();
            for n in 0..batch {
                im2col(&grad[n * out_len..(n + 1) * out_len], &g, &mut col);
                if let Some(gx) = gx.as_mut() {
                    gemm(c_in, rows, cols, &wd, Op::N, &col, Op::N, 0.0, &mut gx[n * in_len..(n + 1) * in_len]);
                }
                if let Some(gw) = gw.as_mut() {
                    gemm(c_in, cols, rows, &x[n * in_len..(n + 1) * in_len], Op::N, &col, Op::T, 1.0, gw);
                }
            }
            vec![gx, gw]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_sums_windows() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.to_vec().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn padding_corner_sees_one_value() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        assert_eq!(y.to_vec()[0], 1.0);
    }

    #[test]
    fn channel_mismatch_is_diagnosed() {
        let x = Tensor::zeros(&[2, 5, 5]);
        let w = Tensor::zeros(&[3, 1, 3, 3]);
        let err = conv2d(&x, &w, None, 1, 0).unwrap_err().to_string();
        assert!(err.contains("2 channels"), "{err}");
    }

    #[test]
    fn kernel_larger_than_padded_input_rejected() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(conv2d(&x, &w, None, 1, 1).is_err());
    }

    #[test]
    fn transposed_upsamples_57_to_228() {
        let x = Tensor::zeros(&[1, 57, 57]);
        let w = Tensor::zeros(&[1, 1, 8, 8]);
        let y = transposed_conv2d(&x, &w, 4, 2).unwrap();
        assert_eq!(y.shape(), &[1, 228, 228]);
    }

    #[test]
    fn transposed_scalar_product() {
        let x = Tensor::from_vec(vec![1.5], &[1, 1, 1]).unwrap();
        let w = Tensor::from_vec(vec![-2.0], &[1, 1, 1, 1]).unwrap();
        let y = transposed_conv2d(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.to_vec(), vec![-3.0]);
    }

    #[test]
    fn transposed_non_positive_extent_rejected() {
        let x = Tensor::zeros(&[1, 1, 1]);
        let w = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(transposed_conv2d(&x, &w, 1, 1).is_err());
    }
}
