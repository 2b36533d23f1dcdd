//! First-order solvers and the step learning-rate policy.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::param::Parameter;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    SgdMomentum,
    /// Sutskever form: `v ← μv − lr·g; θ ← θ + μv − lr·g`.
    Nesterov,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

/// Solver hyperparameters plus per-parameter moment buffers, keyed by
/// parameter name.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: SolverKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    buffers: HashMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(kind: SolverKind, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(TensorError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(TensorError::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            momentum,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            buffers: HashMap::new(),
        })
    }

    pub fn sgd(learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::new(SolverKind::SgdMomentum, learning_rate, momentum)
    }

    pub fn nesterov(learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::new(SolverKind::Nesterov, learning_rate, momentum)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(SolverKind::Adam, learning_rate, 0.0)
    }

    /// Applies one update to every non-frozen parameter. A trainable
    /// parameter without a gradient means the graph is broken and is
    /// reported instead of silently skipped.
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        for p in params.iter().filter(|p| !p.is_frozen()) {
            if p.tensor().grad_ref().is_none() {
                return Err(TensorError::MissingGrad(p.name().to_string()));
            }
        }
        for p in params.iter().filter(|p| !p.is_frozen()) {
            let grad = p.tensor().grad_ref();
            let grad = grad.as_ref().expect("checked above");
            let n = grad.len();
            let buf = self
                .buffers
                .entry(p.name().to_string())
                .or_insert_with(|| Moments {
                    first: vec![0.0; n],
                    second: vec![0.0; n],
                    steps: 0,
                });
            debug_assert_eq!(buf.first.len(), n);
            buf.steps += 1;
            let mut theta = p.tensor().data_mut();
            let (lr, mu) = (self.learning_rate, self.momentum);
            match self.kind {
                SolverKind::SgdMomentum => {
                    for ((t, v), g) in theta.iter_mut().zip(&mut buf.first).zip(grad) {
                        *v = mu * *v - lr * g;
                        *t += *v;
                    }
                }
                SolverKind::Nesterov => {
                    for ((t, v), g) in theta.iter_mut().zip(&mut buf.first).zip(grad) {
                        *v = mu * *v - lr * g;
                        *t += mu * *v - lr * g;
                    }
                }
                SolverKind::Adam => {
                    let (b1, b2) = (self.beta1, self.beta2);
                    let c1 = 1.0 - b1.powi(buf.steps as i32);
                    let c2 = 1.0 - b2.powi(buf.steps as i32);
                    for (((t, m), v), g) in theta
                        .iter_mut()
                        .zip(&mut buf.first)
                        .zip(&mut buf.second)
                        .zip(grad)
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *t -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn zero_grad(params: &[Parameter]) {
        params.iter().for_each(|p| p.tensor().zero_grad());
    }
}

/// Piecewise-constant learning rate: `base_lr` until the first stepped
/// epoch `floor(step_fraction · total_epochs)`, `base_lr · gamma` after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
    pub step_fraction: f64,
    pub gamma: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, total_epochs: usize, step_fraction: f64, gamma: f64) -> Result<Self> {
        if !(base_lr > 0.0) || total_epochs == 0 || !(gamma > 0.0) {
            return Err(TensorError::Config(format!(
                "invalid schedule: base_lr {base_lr}, epochs {total_epochs}, gamma {gamma}"
            )));
        }
        if !(step_fraction > 0.0 && step_fraction <= 1.0) {
            return Err(TensorError::Config(format!(
                "step fraction must lie in (0, 1], got {step_fraction}"
            )));
        }
        Ok(LrSchedule {
            base_lr,
            total_epochs,
            step_fraction,
            gamma,
        })
    }

    pub fn first_stepped_epoch(&self) -> usize {
        (self.step_fraction * self.total_epochs as f64).floor() as usize
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(TensorError::EpochOutOfRange {
                epoch,
                total: self.total_epochs,
            });
        }
        Ok(if epoch < self.first_stepped_epoch() {
            self.base_lr
        } else {
            self.base_lr * self.gamma
        })
    }
}
