//! Kernel pictures and a spatial-structure score for them.

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::ops::deconv2d;
use crate::tensor::Tensor;

/// One image-space picture per input channel of deconv layer `layer` (0-based). The
/// last layer's kernels are already RGB; earlier kernels are pushed through the layers
/// below them with zero bias and no sparsity.
pub fn kernel_cells(generator: &Generator, layer: usize) -> Result<Vec<Tensor>> {
    let n = generator.config.layers.len();
    if layer >= n {
        return Err(Error::Index(format!(
            "deconv layer {layer} (generator has {n})"
        )));
    }
    let ker = &generator.params.layers[layer].kernel;
    let s = ker.shape();
    let (c_in, k, c_out) = (s[0], s[1], s[3]);
    let per = k * k * c_out;
    let mut cells = Vec::with_capacity(c_in);
    for c in 0..c_in {
        let mut cell =
            Tensor::from_vec(&[k, k, c_out], ker.data()[c * per..(c + 1) * per].to_vec())?;
        for m in layer + 1..n {
            let spec = &generator.config.layers[m];
            let p = &generator.params.layers[m];
            cell = deconv2d(
                &cell,
                &p.kernel,
                &Tensor::zeros(p.bias.shape()),
                spec.stride,
                spec.pad,
            )?;
        }
        cells.push(cell);
    }
    Ok(cells)
}

/// Mean over cells and channels of `|ρ|`, where `ρ` is the lag-1 autocorrelation of the
/// mean-subtracted cell, pooled over horizontal and vertical neighbor pairs.
pub fn lag1_autocorrelation(cells: &[Tensor]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for cell in cells {
        let s = cell.shape();
        let (w, h, c) = (s[0], s[1], s[2]);
        for ch in 0..c {
            let mean = (0..w)
                .flat_map(|x| (0..h).map(move |y| (x, y)))
                .map(|(x, y)| cell.get(&[x, y, ch]))
                .sum::<f64>()
                / (w * h) as f64;
            let d = |x: usize, y: usize| cell.get(&[x, y, ch]) - mean;
            let mut var = 0.0;
            let mut cov = 0.0;
            let mut pairs = 0usize;
            for x in 0..w {
                for y in 0..h {
                    var += d(x, y) * d(x, y);
                    if x + 1 < w {
                        cov += d(x, y) * d(x + 1, y);
                        pairs += 1;
                    }
                    if y + 1 < h {
                        cov += d(x, y) * d(x, y + 1);
                        pairs += 1;
                    }
                }
            }
            if var > 0.0 && pairs > 0 {
                // Normalize the pooled covariance per pair against the per-pixel variance.
                let rho = (cov / pairs as f64) / (var / (w * h) as f64);
                total += rho.abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
