//! Transposed 2-D convolution.
//!
//! Input `[w, h, c_in]`, kernel `[c_in, k, k, c_out]`, output `[w', h', c_out]` with
//! `w' = (w − 1)·stride + k − 2·pad`. Input activation `(x, y, c)` scatters
//! `fm[x,y,c]·ker[c,·,·,o]` into the window anchored at `(x·stride − pad, y·stride − pad)`.

use super::{expect_extent, expect_rank};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn deconv2d_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return Err(Error::Config(format!(
            "deconv2d needs positive input/kernel/stride (got input {input}, kernel {kernel}, stride {stride})"
        )));
    }
    let out = (input as i64 - 1) * stride as i64 + kernel as i64 - 2 * pad as i64;
    if out < 1 {
        return Err(Error::Config(format!(
            "deconv2d output extent {out} is not positive (input {input}, kernel {kernel}, stride {stride}, pad {pad})"
        )));
    }
    Ok(out as usize)
}

struct Geometry {
    w: usize,
    h: usize,
    c_in: usize,
    k: usize,
    c_out: usize,
    ow: usize,
    oh: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(
        fm_shape: &[usize],
        ker: &Tensor,
        stride: usize,
        pad: usize,
        op: &'static str,
    ) -> Result<Self> {
        expect_rank(ker, 4, op)?;
        let ks = ker.shape();
        if ks[1] != ks[2] {
            return Err(Error::Dimension {
                op,
                axis: "kernel width vs height",
                expected: ks[1],
                got: ks[2],
            });
        }
        let (w, h, c_in) = (fm_shape[0], fm_shape[1], fm_shape[2]);
        expect_extent(c_in, ks[0], op, "input channels")?;
        let k = ks[1];
        Ok(Geometry {
            w,
            h,
            c_in,
            k,
            c_out: ks[3],
            ow: deconv2d_output_extent(w, k, stride, pad)?,
            oh: deconv2d_output_extent(h, k, stride, pad)?,
            stride,
            pad,
        })
    }

    /// Output coordinate for input coordinate `i` and kernel tap `t`, if in bounds.
    #[inline]
    fn target(&self, i: usize, t: usize, extent: usize) -> Option<usize> {
        let o = (i * self.stride + t) as isize - self.pad as isize;
        (o >= 0 && (o as usize) < extent).then_some(o as usize)
    }
}

pub fn deconv2d(
    fm: &Tensor,
    ker: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    deconv2d_with_bias_weight(fm, ker, bias, stride, pad, 1.0)
}

/// [`deconv2d`] with the bias scaled by `bias_weight` (1.0 gives the plain op).
///
/// Exactly-zero input activations are skipped, so the cost scales with the number of
/// surviving activations.
pub fn deconv2d_with_bias_weight(
    fm: &Tensor,
    ker: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
    bias_weight: f64,
) -> Result<Tensor> {
    const OP: &str = "deconv2d";
    expect_rank(fm, 3, OP)?;
    let g = Geometry::new(fm.shape(), ker, stride, pad, OP)?;
    expect_extent(bias.numel(), g.c_out, OP, "bias (output channels)")?;

    let kd = ker.data();
    let mut out = vec![0.0; g.ow * g.oh * g.c_out];
    for x in 0..g.w {
        for y in 0..g.h {
            for c in 0..g.c_in {
                let v = fm.data()[(x * g.h + y) * g.c_in + c];
                if v == 0.0 {
                    continue;
                }
                for kx in 0..g.k {
                    let Some(ox) = g.target(x, kx, g.ow) else {
                        continue;
                    };
                    for ky in 0..g.k {
                        let Some(oy) = g.target(y, ky, g.oh) else {
                            continue;
                        };
                        let krow = &kd[((c * g.k + kx) * g.k + ky) * g.c_out..][..g.c_out];
                        let orow = &mut out[(ox * g.oh + oy) * g.c_out..][..g.c_out];
                        for (o, &kv) in orow.iter_mut().zip(krow) {
                            *o += v * kv;
                        }
                    }
                }
            }
        }
    }
    let b = bias.data();
    for px in out.chunks_mut(g.c_out) {
        for (o, &bv) in px.iter_mut().zip(b) {
            *o += bias_weight * bv;
        }
    }
    Tensor::from_vec(&[g.ow, g.oh, g.c_out], out)
}

/// Gradient with respect to the input: the strided correlation of `grad_out` with `ker`.
///
/// When `only` is given (same shape as the input), entries where it is zero are left at
/// zero and not computed.
pub fn deconv2d_vjp_input(
    grad_out: &Tensor,
    ker: &Tensor,
    input_shape: &[usize],
    stride: usize,
    pad: usize,
    only: Option<&Tensor>,
) -> Result<Tensor> {
    const OP: &str = "deconv2d_backward";
    if input_shape.len() != 3 {
        return Err(Error::Dimension {
            op: OP,
            axis: "input rank",
            expected: 3,
            got: input_shape.len(),
        });
    }
    let g = Geometry::new(input_shape, ker, stride, pad, OP)?;
    expect_rank(grad_out, 3, OP)?;
    expect_extent(grad_out.shape()[0], g.ow, OP, "grad width")?;
    expect_extent(grad_out.shape()[1], g.oh, OP, "grad height")?;
    expect_extent(grad_out.shape()[2], g.c_out, OP, "grad channels")?;
    if let Some(m) = only {
        expect_extent(m.numel(), g.w * g.h * g.c_in, OP, "mask size")?;
    }

    let kd = ker.data();
    let gd = grad_out.data();
    let mut gin = vec![0.0; g.w * g.h * g.c_in];
    for x in 0..g.w {
        for y in 0..g.h {
            for c in 0..g.c_in {
                let idx = (x * g.h + y) * g.c_in + c;
                if only.is_some_and(|m| m.data()[idx] == 0.0) {
                    continue;
                }
                let mut acc = 0.0;
                for kx in 0..g.k {
                    let Some(ox) = g.target(x, kx, g.ow) else {
                        continue;
                    };
                    for ky in 0..g.k {
                        let Some(oy) = g.target(y, ky, g.oh) else {
                            continue;
                        };
                        let krow = &kd[((c * g.k + kx) * g.k + ky) * g.c_out..][..g.c_out];
                        let grow = &gd[(ox * g.oh + oy) * g.c_out..][..g.c_out];
                        acc += krow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                gin[idx] = acc;
            }
        }
    }
    Tensor::from_vec(input_shape, gin)
}

/// Gradients with respect to the kernel and the bias. Zero input activations are skipped.
pub fn deconv2d_vjp_params(
    fm: &Tensor,
    grad_out: &Tensor,
    ker_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor)> {
    const OP: &str = "deconv2d_backward";
    expect_rank(fm, 3, OP)?;
    let proto = Tensor::zeros(ker_shape);
    let g = Geometry::new(fm.shape(), &proto, stride, pad, OP)?;
    expect_extent(grad_out.numel(), g.ow * g.oh * g.c_out, OP, "grad size")?;

    let gd = grad_out.data();
    let mut gk = vec![0.0; proto.numel()];
    for x in 0..g.w {
        for y in 0..g.h {
            for c in 0..g.c_in {
                let v = fm.data()[(x * g.h + y) * g.c_in + c];
                if v == 0.0 {
                    continue;
                }
                for kx in 0..g.k {
                    let Some(ox) = g.target(x, kx, g.ow) else {
                        continue;
                    };
                    for ky in 0..g.k {
                        let Some(oy) = g.target(y, ky, g.oh) else {
                            continue;
                        };
                        let krow = &mut gk[((c * g.k + kx) * g.k + ky) * g.c_out..][..g.c_out];
                        let grow = &gd[(ox * g.oh + oy) * g.c_out..][..g.c_out];
                        for (slot, &gv) in krow.iter_mut().zip(grow) {
                            *slot += v * gv;
                        }
                    }
                }
            }
        }
    }
    let mut gb = vec![0.0; g.c_out];
    for px in gd.chunks(g.c_out) {
        for (slot, &gv) in gb.iter_mut().zip(px) {
            *slot += gv;
        }
    }
    Ok((
        Tensor::from_vec(ker_shape, gk)?,
        Tensor::from_vec(&[g.c_out], gb)?,
    ))
}

#[derive(Debug, Clone)]
pub struct Deconv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Full VJP of [`deconv2d`].
pub fn deconv2d_backward(
    fm: &Tensor,
    ker: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Deconv2dGrads> {
    let input = deconv2d_vjp_input(grad_out, ker, fm.shape(), stride, pad, None)?;
    let (kernel, bias) = deconv2d_vjp_params(fm, grad_out, ker.shape(), stride, pad)?;
    Ok(Deconv2dGrads {
        input,
        kernel,
        bias,
    })
}
