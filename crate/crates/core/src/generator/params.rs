use std::collections::BTreeMap;

use super::GeneratorConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Initial weight std; biases start at zero.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvParams {
    /// `[c_in, k, k, c_out]`
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Generator weights θ. Also used as the container for gradients with respect to θ.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// `[d, w·h·c]`
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    pub layers: Vec<DeconvParams>,
}

impl GeneratorParams {
    pub fn init(config: &GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut s = Stream::new(seed);
        let mut p = Self::zeros(config)?;
        p.fc_weight = s.normal_tensor(p.fc_weight.shape(), INIT_STD);
        for l in &mut p.layers {
            l.kernel = s.normal_tensor(l.kernel.shape(), INIT_STD);
        }
        Ok(p)
    }

    pub fn zeros(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.feature_shapes()?;
        let layers = config
            .layers
            .iter()
            .zip(&shapes)
            .map(|(spec, &[_, _, c_in])| DeconvParams {
                kernel: Tensor::zeros(&[c_in, spec.kernel, spec.kernel, spec.out_channels]),
                bias: Tensor::zeros(&[spec.out_channels]),
            })
            .collect();
        Ok(GeneratorParams {
            fc_weight: Tensor::zeros(&[config.latent_dim, config.fc_len()]),
            fc_bias: Tensor::zeros(&[config.fc_len()]),
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        GeneratorParams {
            fc_weight: Tensor::zeros(self.fc_weight.shape()),
            fc_bias: Tensor::zeros(self.fc_bias.shape()),
            layers: self
                .layers
                .iter()
                .map(|l| DeconvParams {
                    kernel: Tensor::zeros(l.kernel.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.fc_weight, &self.fc_bias];
        for l in &self.layers {
            v.push(&l.kernel);
            v.push(&l.bias);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.fc_weight, &mut self.fc_bias];
        for l in &mut self.layers {
            v.push(&mut l.kernel);
            v.push(&mut l.bias);
        }
        v
    }

    /// Checkpoint names, aligned with [`GeneratorParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut v = vec!["fc.weight".to_string(), "fc.bias".to_string()];
        for i in 1..=self.layers.len() {
            v.push(format!("deconv{i}.kernel"));
            v.push(format!("deconv{i}.bias"));
        }
        v
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        self.names().into_iter().zip(self.tensors()).collect()
    }

    /// Rebuilds parameters from named tensors, checking every shape against `config`.
    pub fn from_named(config: &GeneratorConfig, named: &BTreeMap<String, Tensor>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let names = p.names();
        for (name, slot) in names.iter().zip(p.tensors_mut()) {
            let t = named
                .get(name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            if t.shape() != slot.shape() {
                return Err(Error::Config(format!(
                    "tensor `{name}` has shape {:?}, config expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(p)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// `self += s · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &GeneratorParams, s: f64) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, s)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }
}
