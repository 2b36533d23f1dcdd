use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    let (ra, rb) = (a.requires_grad(), b.requires_grad());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| vec![ra.then(|| g.to_vec()), rb.then(|| g.to_vec())]),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data: Vec<f64> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let (sa, sb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = sa.requires_grad().then(|| {
                g.iter().zip(sb.data().iter()).map(|(g, y)| g * y).collect()
            });
            let gb = sb.requires_grad().then(|| {
                g.iter().zip(sa.data().iter()).map(|(g, x)| g * x).collect()
            });
            vec![ga, gb]
        }),
    ))
}

/// `a * factor + offset`, elementwise.
pub fn affine(a: &Tensor, factor: f64, offset: f64) -> Tensor {
    let data = a.data().iter().map(|x| x * factor + offset).collect();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| vec![Some(g.iter().map(|g| g * factor).collect())]),
    )
}

pub fn scale(a: &Tensor, factor: f64) -> Tensor {
    affine(a, factor, 0.0)
}

/// Adds a constant (non-trainable) offset per channel of an `[B, C, H, W]`
/// tensor.
pub fn shift_channels(a: &Tensor, offsets: &[f64]) -> Result<Tensor> {
    let s = a.shape();
    if s.len() != 4 || s[1] != offsets.len() {
        return Err(TensorError::shape(
            "shift_channels",
            format!("{} offsets for shape {s:?}", offsets.len()),
        ));
    }
    let plane = s[2] * s[3];
    let c = s[1];
    let mut data = a.to_vec();
    for (i, chunk) in data.chunks_mut(plane).enumerate() {
        let off = offsets[i % c];
        chunk.iter_mut().for_each(|v| *v += off);
    }
    Ok(Tensor::from_op(
        data,
        s.to_vec(),
        vec![a.clone()],
        Box::new(|g| vec![Some(g.to_vec())]),
    ))
}

pub fn sum(a: &Tensor) -> Tensor {
    let total: f64 = a.data().iter().sum();
    let n = a.numel();
    Tensor::from_op(
        vec![total],
        Vec::new(),
        vec![a.clone()],
        Box::new(move |g| vec![Some(vec![g[0]; n])]),
    )
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.numel();
    scale(&sum(a), 1.0 / n as f64)
}

/// Inner product with a constant weight tensor, returning a scalar. Handy
/// for projecting an output onto a fixed direction in gradient checks.
pub fn dot_const(a: &Tensor, weights: &[f64]) -> Result<Tensor> {
    if weights.len() != a.numel() {
        return Err(TensorError::shape(
            "dot_const",
            format!("{} weights for {} values", weights.len(), a.numel()),
        ));
    }
    let total: f64 = a.data().iter().zip(weights).map(|(x, w)| x * w).sum();
    let w = weights.to_vec();
    Ok(Tensor::from_op(
        vec![total],
        Vec::new(),
        vec![a.clone()],
        Box::new(move |g| vec![Some(w.iter().map(|w| w * g[0]).collect())]),
    ))
}

pub fn sigmoid(a: &Tensor) -> Tensor {
    let out: Vec<f64> = a.data().iter().map(|&x| stable_sigmoid(x)).collect();
    let saved = out.clone();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            vec![Some(
                g.iter().zip(&saved).map(|(g, s)| g * s * (1.0 - s)).collect(),
            )]
        }),
    )
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x` where `x >= 0`, `slope * x` elsewhere.
pub fn leaky_relu(a: &Tensor, slope: f64) -> Tensor {
    let out = a
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    let src = a.clone();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            vec![Some(
                g.iter()
                    .zip(src.data().iter())
                    .map(|(g, &x)| if x >= 0.0 { *g } else { slope * g })
                    .collect(),
            )]
        }),
    )
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != a.numel() || shape.contains(&0) {
        return Err(TensorError::shape(
            "reshape",
            format!("{:?} -> {shape:?}", a.shape()),
        ));
    }
    Ok(Tensor::from_op(
        a.to_vec(),
        shape.to_vec(),
        vec![a.clone()],
        Box::new(|g| vec![Some(g.to_vec())]),
    ))
}

/// Collapses every axis after the first: `[B, ...] -> [B, prod(...)]`.
pub fn flatten(a: &Tensor) -> Result<Tensor> {
    let b = *a.shape().first().ok_or_else(|| {
        TensorError::shape("flatten", "scalar input has no batch axis")
    })?;
    reshape(a, &[b, a.numel() / b])
}

/// Rescales each row of `[B, D]` to Euclidean norm `radius`, using
/// `sqrt(sum(x^2) + epsilon)` as the norm.
pub fn normalize_rows(a: &Tensor, radius: f64, epsilon: f64) -> Result<Tensor> {
    let [b, d] = a.shape()[..] else {
        return Err(TensorError::shape(
            "normalize_rows",
            format!("expected [B, D], got {:?}", a.shape()),
        ));
    };
    let x = a.data().clone();
    let norms: Vec<f64> = x
        .chunks(d)
        .map(|r| (r.iter().map(|v| v * v).sum::<f64>() + epsilon).sqrt())
        .collect();
    let out = x
        .chunks(d)
        .zip(&norms)
        .flat_map(|(r, n)| r.iter().map(move |v| radius * v / n))
        .collect();
    Ok(Tensor::from_op(
        out,
        vec![b, d],
        vec![a.clone()],
        Box::new(move |g| {
            let mut gx = Vec::with_capacity(b * d);
            for ((r, gr), n) in x.chunks(d).zip(g.chunks(d)).zip(&norms) {
                let dot: f64 = r.iter().zip(gr).map(|(v, g)| v * g).sum();
                let k = dot / (n * n);
                gx.extend(r.iter().zip(gr).map(|(v, g)| radius / n * (g - v * k)));
            }
            vec![Some(gx)]
        }),
    ))
}
