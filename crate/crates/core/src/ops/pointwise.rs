use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ReluResult {
    pub values: Tensor,
    pub mask: Tensor,
}

pub fn relu(t: &Tensor) -> ReluResult {
    let mask = t.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let values = t.map(|v| if v > 0.0 { v } else { 0.0 });
    ReluResult { values, mask }
}

pub fn relu_backward(mask: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.mul(mask)
}

pub fn tanh_map(t: &Tensor) -> Tensor {
    t.map(f64::tanh)
}

/// VJP of tanh given its *output*: `g·(1 − out²)`.
pub fn tanh_backward(out: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.zip_map(out, |g, y| g * (1.0 - y * y))
}
