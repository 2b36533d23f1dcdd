//! Dense tensors with reverse-mode differentiation, sized for small CPU
//! convnets: convolution (and its transpose), max-pooling, batch norm,
//! leaky ReLU, linear layers and softmax cross-entropy, plus SGD/Nesterov/Adam
//! solvers, a step learning-rate schedule and a binary checkpoint format.
//!
//! All arithmetic is `f64` and single-threaded, so a fixed seed reproduces
//! every value bit for bit.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod ops;
mod optim;
mod param;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use optim::{LrSchedule, OptimizerState, SolverKind};
pub use param::{fingerprint, he_normal, seeded_rng, InitRng, Parameter};
pub use tensor::Tensor;
