use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::deconv2d_output_extent;

/// One transposed-convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_channels: usize,
}

/// Architecture of the sparse generator: `Z → FC → fm¹ → (Top-K → ReLU → deconv)… → tanh`.
///
/// `top_k[i]` is the number of activations kept in feature map `i` (the FC output is
/// feature map 0), so there is one entry per deconvolution layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    /// `[w, h, c]` of the FC output.
    pub fc_shape: [usize; 3],
    pub layers: Vec<DeconvSpec>,
    pub top_k: Vec<usize>,
    /// Observation noise std on the `[-1, 1]` image scale.
    pub sigma: f64,
}

pub const MAX_DECONV_LAYERS: usize = 4;

impl Default for GeneratorConfig {
    /// 20-d latent, 2×2×64 → 4×4×128 → 16×16×3 with K = (4, 32), σ = 0.3.
    fn default() -> Self {
        GeneratorConfig {
            latent_dim: 20,
            fc_shape: [2, 2, 64],
            layers: vec![
                DeconvSpec {
                    kernel: 6,
                    stride: 2,
                    pad: 2,
                    out_channels: 128,
                },
                DeconvSpec {
                    kernel: 6,
                    stride: 4,
                    pad: 1,
                    out_channels: 3,
                },
            ],
            top_k: vec![4, 32],
            sigma: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.fc_shape.contains(&0) {
            return Err(Error::Config(format!(
                "fc_shape {:?} has a zero extent",
                self.fc_shape
            )));
        }
        if self.layers.is_empty() || self.layers.len() > MAX_DECONV_LAYERS {
            return Err(Error::Config(format!(
                "need 1..={MAX_DECONV_LAYERS} deconvolution layers, got {}",
                self.layers.len()
            )));
        }
        if self.top_k.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "top_k has {} entries but there are {} sparse feature maps",
                self.top_k.len(),
                self.layers.len()
            )));
        }
        if let Some(i) = self.top_k.iter().position(|&k| k == 0) {
            return Err(Error::Config(format!("top_k[{i}] must be at least 1")));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.out_channels == 0 {
                return Err(Error::Config(format!("layer {i} has zero output channels")));
            }
        }
        let out_c = self.image_channels();
        if out_c != 1 && out_c != 3 {
            return Err(Error::Config(format!(
                "the last layer must emit 1 or 3 image channels, got {out_c}"
            )));
        }
        self.feature_shapes().map(|_| ())
    }

    /// `[w, h, c]` of every sparse feature map, FC output first.
    pub fn feature_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = vec![self.fc_shape];
        for l in &self.layers[..self.layers.len().saturating_sub(1)] {
            let [w, h, _] = *shapes.last().unwrap();
            shapes.push([
                deconv2d_output_extent(w, l.kernel, l.stride, l.pad)?,
                deconv2d_output_extent(h, l.kernel, l.stride, l.pad)?,
                l.out_channels,
            ]);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<[usize; 3]> {
        let shapes = self.feature_shapes()?;
        let [w, h, _] = *shapes.last().unwrap();
        let l = self.layers.last().unwrap();
        Ok([
            deconv2d_output_extent(w, l.kernel, l.stride, l.pad)?,
            deconv2d_output_extent(h, l.kernel, l.stride, l.pad)?,
            l.out_channels,
        ])
    }

    pub fn image_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn fc_len(&self) -> usize {
        self.fc_shape.iter().product()
    }

    /// Number of feature maps carrying a sparse operation.
    pub fn num_sparse_maps(&self) -> usize {
        self.layers.len()
    }
}
