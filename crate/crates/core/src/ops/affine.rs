use super::{expect_extent, expect_rank};
use crate::error::Result;
use crate::tensor::Tensor;

/// `out[j] = Σ_i x[i]·W[i,j] + b[j]` for `x: [d]`, `W: [d, m]`, `b: [m]`.
pub fn affine(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    const OP: &str = "affine";
    expect_rank(x, 1, OP)?;
    expect_rank(weight, 2, OP)?;
    expect_rank(bias, 1, OP)?;
    let (d, m) = (weight.shape()[0], weight.shape()[1]);
    expect_extent(x.numel(), d, OP, "input (rows of W)")?;
    expect_extent(bias.numel(), m, OP, "output (columns of W)")?;

    let w = weight.data();
    let mut out = bias.data().to_vec();
    for (i, &xi) in x.data().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * m..(i + 1) * m];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    Tensor::from_vec(&[m], out)
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// VJP of [`affine`]: `∂x = W·g`, `∂W = x⊗g`, `∂b = g`.
pub fn affine_backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<AffineGrads> {
    const OP: &str = "affine_backward";
    expect_rank(weight, 2, OP)?;
    let (d, m) = (weight.shape()[0], weight.shape()[1]);
    expect_extent(x.numel(), d, OP, "input (rows of W)")?;
    expect_extent(grad_out.numel(), m, OP, "output (columns of W)")?;

    let w = weight.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; d];
    let mut gw = vec![0.0; d * m];
    for i in 0..d {
        let row = &w[i * m..(i + 1) * m];
        gx[i] = row.iter().zip(g).map(|(a, b)| a * b).sum();
        let xi = x.data()[i];
        for (slot, &gj) in gw[i * m..(i + 1) * m].iter_mut().zip(g) {
            *slot = xi * gj;
        }
    }
    Ok(AffineGrads {
        input: Tensor::from_vec(&[d], gx)?,
        weight: Tensor::from_vec(&[d, m], gw)?,
        bias: grad_out.clone().reshape(&[m])?,
    })
}
