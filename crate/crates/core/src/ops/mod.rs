//! Differentiable primitives used by the generator and the descriptor.
//!
//! Every forward op comes with an explicit vector-Jacobian product. Piecewise ops
//! (Top-K, ReLU) return their masks so a backward pass can reuse them frozen.

mod affine;
mod conv;
mod deconv;
mod pointwise;
mod topk;

pub use affine::{affine, affine_backward, AffineGrads};
pub use conv::{conv2d, conv2d_backward, conv2d_output_extent, Conv2dGrads};
pub use deconv::{
    deconv2d, deconv2d_backward, deconv2d_output_extent, deconv2d_vjp_input, deconv2d_vjp_params,
    deconv2d_with_bias_weight, Deconv2dGrads,
};
pub use pointwise::{relu, relu_backward, tanh_backward, tanh_map, ReluResult};
pub use topk::{topk, topk_backward, TopKResult};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn expect_rank(t: &Tensor, rank: usize, op: &'static str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Dimension {
            op,
            axis: "rank",
            expected: rank,
            got: t.rank(),
        });
    }
    Ok(())
}

pub(crate) fn expect_extent(
    got: usize,
    expected: usize,
    op: &'static str,
    axis: &'static str,
) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension {
            op,
            axis,
            expected,
            got,
        });
    }
    Ok(())
}
