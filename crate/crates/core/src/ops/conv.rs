//! Forward (bottom-up) strided 2-D correlation, used by the descriptor.
//!
//! Same kernel layout as the transposed convolution, `[c_in, k, k, c_out]`. With the
//! channel axes of the kernel swapped, `conv2d` is the adjoint of `deconv2d`.

use super::{expect_extent, expect_rank};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn conv2d_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Config(
            "conv2d needs positive kernel and stride".into(),
        ));
    }
    let span = input + 2 * pad;
    if span < kernel {
        return Err(Error::Config(format!(
            "conv2d kernel {kernel} exceeds padded input extent {span}"
        )));
    }
    Ok((span - kernel) / stride + 1)
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
        input: &Tensor,
        ker: &Tensor,
        stride: usize,
        pad: usize,
        op: &'static str,
    ) -> Result<Self> {
        expect_rank(input, 3, op)?;
        expect_rank(ker, 4, op)?;
        let (s, ks) = (input.shape(), ker.shape());
        expect_extent(s[2], ks[0], op, "input channels")?;
        expect_extent(ks[2], ks[1], op, "kernel height")?;
        let k = ks[1];
        Ok(Geometry {
            w: s[0],
            h: s[1],
            c_in: s[2],
            k,
            c_out: ks[3],
            ow: conv2d_output_extent(s[0], k, stride, pad)?,
            oh: conv2d_output_extent(s[1], k, stride, pad)?,
            stride,
            pad,
        })
    }

    #[inline]
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + t) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }
}

pub fn conv2d(
    input: &Tensor,
    ker: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    const OP: &str = "conv2d";
    let g = Geometry::new(input, ker, stride, pad, OP)?;
    expect_extent(bias.numel(), g.c_out, OP, "bias (output channels)")?;
    let (id, kd) = (input.data(), ker.data());
    let mut out = vec![0.0; g.ow * g.oh * g.c_out];
    for ox in 0..g.ow {
        for oy in 0..g.oh {
            let orow = &mut out[(ox * g.oh + oy) * g.c_out..][..g.c_out];
            orow.copy_from_slice(bias.data());
            for kx in 0..g.k {
                let Some(ix) = g.source(ox, kx, g.w) else {
                    continue;
                };
                for ky in 0..g.k {
                    let Some(iy) = g.source(oy, ky, g.h) else {
                        continue;
                    };
                    for c in 0..g.c_in {
                        let v = id[(ix * g.h + iy) * g.c_in + c];
                        if v == 0.0 {
                            continue;
                        }
                        let krow = &kd[((c * g.k + kx) * g.k + ky) * g.c_out..][..g.c_out];
                        for (o, &kv) in orow.iter_mut().zip(krow) {
                            *o += v * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[g.ow, g.oh, g.c_out], out)
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// VJP of [`conv2d`]. Set `want_params = false` to skip the kernel/bias accumulation
/// (they come back as zeros).
pub fn conv2d_backward(
    input: &Tensor,
    ker: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    want_params: bool,
) -> Result<Conv2dGrads> {
    const OP: &str = "conv2d_backward";
    let g = Geometry::new(input, ker, stride, pad, OP)?;
    expect_extent(grad_out.numel(), g.ow * g.oh * g.c_out, OP, "grad size")?;
    let (id, kd, gd) = (input.data(), ker.data(), grad_out.data());
    let mut gin = vec![0.0; id.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gb = vec![0.0; g.c_out];
    for ox in 0..g.ow {
        for oy in 0..g.oh {
            let grow = &gd[(ox * g.oh + oy) * g.c_out..][..g.c_out];
            if want_params {
                for (b, &gv) in gb.iter_mut().zip(grow) {
                    *b += gv;
                }
            }
            for kx in 0..g.k {
                let Some(ix) = g.source(ox, kx, g.w) else {
                    continue;
                };
                for ky in 0..g.k {
                    let Some(iy) = g.source(oy, ky, g.h) else {
                        continue;
                    };
                    for c in 0..g.c_in {
                        let ii = (ix * g.h + iy) * g.c_in + c;
                        let kbase = ((c * g.k + kx) * g.k + ky) * g.c_out;
                        let krow = &kd[kbase..][..g.c_out];
                        gin[ii] += krow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                        if want_params {
                            let v = id[ii];
                            if v != 0.0 {
                                for (slot, &gv) in gk[kbase..][..g.c_out].iter_mut().zip(grow) {
                                    *slot += v * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::from_vec(input.shape(), gin)?,
        kernel: Tensor::from_vec(ker.shape(), gk)?,
        bias: Tensor::from_vec(&[g.c_out], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{deconv2d, deconv2d_vjp_input};
    use crate::rng::Stream;

    #[test]
    fn output_extent() {
        assert_eq!(conv2d_output_extent(16, 4, 2, 1).unwrap(), 8);
        assert_eq!(conv2d_output_extent(8, 4, 2, 1).unwrap(), 4);
        assert!(conv2d_output_extent(2, 5, 1, 0).is_err());
    }

    #[test]
    fn adjoint_of_deconv() {
        // <deconv(a), b> == <a, conv(b)> with zero biases.
        let mut s = Stream::new(11);
        let ker = s.normal_tensor(&[3, 4, 4, 2], 1.0);
        let a = s.normal_tensor(&[4, 4, 3], 1.0);
        let up = deconv2d(&a, &ker, &Tensor::zeros(&[2]), 2, 1).unwrap();
        let b = s.normal_tensor(up.shape(), 1.0);
        let down = conv2d(&b, &ker.transpose_io(), &Tensor::zeros(&[3]), 2, 1).unwrap();
        let lhs = up.dot(&b).unwrap();
        let rhs = a.dot(&down).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        // And the deconv input-VJP is the same correlation.
        let vjp = deconv2d_vjp_input(&b, &ker, a.shape(), 2, 1, None).unwrap();
        assert!(vjp.max_abs_diff(&down).unwrap() < 1e-12);
    }

    impl Tensor {
        /// `[c_in, k, k, c_out]` → `[c_out, k, k, c_in]`.
        fn transpose_io(&self) -> Tensor {
            let s = self.shape();
            let (ci, k, co) = (s[0], s[1], s[3]);
            let mut t = Tensor::zeros(&[co, k, k, ci]);
            for c in 0..ci {
                for i in 0..k {
                    for j in 0..k {
                        for o in 0..co {
                            t.set(&[o, i, j, c], self.get(&[c, i, j, o]));
                        }
                    }
                }
            }
            t
        }
    }
}
