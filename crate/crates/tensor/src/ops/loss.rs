use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Row-wise softmax of a `[B, K]` slice, max-subtracted.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    out
}

/// Mean multinomial logistic loss `-log softmax(logits)[label]` over the batch.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(TensorError::shape(
            "softmax_cross_entropy",
            format!("logits {s:?} with {} labels", labels.len()),
        ));
    }
    let (b, k) = (s[0], s[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(TensorError::LabelOutOfRange {
            label: bad,
            classes: k,
        });
    }
    let data = logits.data();
    let mut total = 0.0;
    for (row, &label) in data.chunks(k).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    let probs = softmax_rows(&data, k);
    drop(data);
    let labels = labels.to_vec();
    Ok(Tensor::from_op(
        vec![total / b as f64],
        Vec::new(),
        vec![logits.clone()],
        Box::new(move |g| {
            let scale = g[0] / b as f64;
            let mut grad = probs.clone();
            for (i, &l) in labels.iter().enumerate() {
                grad[i * k + l] -= 1.0;
            }
            grad.iter_mut().for_each(|v| *v *= scale);
            vec![Some(grad)]
        }),
    ))
}
