//! Central finite-difference gradient checking.
//!
//! The checker only evaluates the forward closure on perturbed inputs; it
//! never looks at the graph, so it is an independent reference for
//! `Tensor::backward`.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

/// Compares backprop gradients of a scalar function against central
/// differences with step `h` for every element of every input (or a strided
/// subset when `max_per_input` is set).
///
/// `f` must rebuild the graph from the current input values on each call.
/// Relative error uses `floor` as a minimum denominator so that components
/// that are zero in both routes do not blow up the ratio.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    f: F,
    h: f64,
    floor: f64,
    max_per_input: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor>,
{
    for t in inputs {
        t.zero_grad();
        t.set_requires_grad(true);
    }
    f()?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut checked = 0;
    for (t, grad) in inputs.iter().zip(&analytic) {
        let n = t.numel();
        let stride = match max_per_input {
            Some(m) if m < n => n.div_ceil(m),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + h;
            let plus = f()?.item();
            t.data_mut()[i] = orig - h;
            let minus = f()?.item();
            t.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let abs = (grad[i] - numeric).abs();
            let rel = abs / grad[i].abs().max(numeric.abs()).max(floor);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    for t in inputs {
        t.zero_grad();
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        checked,
    })
}
