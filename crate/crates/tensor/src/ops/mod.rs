//! Differentiable operations. Every function builds a new graph node; none
//! mutate their inputs (batch norm only updates the running statistics it is
//! handed).

mod conv;
mod elementwise;
pub(crate) mod gemm;
mod linear;
mod loss;
mod norm;
mod pool;

pub use conv::{conv2d, conv_out_extent, transposed_conv2d};
pub use elementwise::{
    add, affine, dot_const, flatten, leaky_relu, mean, mul, normalize_rows, reshape, scale,
    shift_channels, sigmoid, sum,
};
pub use linear::linear;
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use norm::{batch_norm2d, Mode, RunningStats};
pub use pool::maxpool2d;
