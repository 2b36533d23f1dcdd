use super::gemm::{gemm, Op};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Affine map `input · weightᵀ + bias` for `input: [B, D]`, `weight: [K, D]`,
/// `bias: [K]`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (is, ws, bs) = (input.shape(), weight.shape(), bias.shape());
    if is.len() != 2 || ws.len() != 2 || is[1] != ws[1] || bs != [ws[0]] {
        return Err(TensorError::shape(
            "linear",
            format!("input {is:?}, weight {ws:?}, bias {bs:?}"),
        ));
    }
    let (b, d, k) = (is[0], is[1], ws[0]);
    let mut out = vec![0.0; b * k];
    for row in out.chunks_mut(k) {
        row.copy_from_slice(&bias.data());
    }
    gemm(b, d, k, &input.data(), Op::N, &weight.data(), Op::T, 1.0, &mut out);

    let (x, w, bb) = (input.clone(), weight.clone(), bias.clone());
    Ok(Tensor::from_op(
        out,
        vec![b, k],
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(move |g| {
            let gx = x.requires_grad().then(|| {
                let mut gx = vec![0.0; b * d];
                gemm(b, k, d, g, Op::N, &w.data(), Op::N, 0.0, &mut gx);
                gx
            });
            let gw = w.requires_grad().then(|| {
                let mut gw = vec![0.0; k * d];
                gemm(k, b, d, g, Op::T, &x.data(), Op::N, 0.0, &mut gw);
                gw
            });
            let gb = bb.requires_grad().then(|| {
                let mut gb = vec![0.0; k];
                for row in g.chunks(k) {
                    gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
                gb
            });
            vec![gx, gw, gb]
        }),
    ))
}
