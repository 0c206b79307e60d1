use serde::{Deserialize, Serialize};

use super::{Energy, TrainableEnergy};
use crate::error::{Error, Result};
use crate::grad_check::Differentiable;
use crate::ops::{affine, affine_backward, conv2d, conv2d_backward, conv2d_output_extent, relu};
use crate::rng::Stream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorConfig {
    pub convs: Vec<ConvSpec>,
    /// Standard deviation of the Gaussian reference distribution `q(Y)`.
    pub sigma_q: f64,
    /// Image-space Langevin step size.
    pub delta: f64,
    pub steps: usize,
    pub noise: bool,
    pub learning_rate: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        let conv = |out_channels| ConvSpec {
            kernel: 4,
            stride: 2,
            pad: 1,
            out_channels,
        };
        DescriptorConfig {
            convs: vec![conv(32), conv(64)],
            sigma_q: 1.0,
            delta: 0.02,
            steps: 10,
            noise: true,
            learning_rate: 1e-3,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_q.is_finite() && self.sigma_q > 0.0) {
            return Err(Error::Config(format!(
                "sigma_q must be positive, got {}",
                self.sigma_q
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!(
                "descriptor delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "descriptor learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        for (i, c) in self.convs.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.out_channels == 0 {
                return Err(Error::Config(format!(
                    "descriptor conv {} has a zero extent",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Shapes of every conv output for images of `image_shape`.
    pub fn feature_shapes(&self, image_shape: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        self.validate()?;
        let mut shape = image_shape;
        let mut out = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            shape = [
                conv2d_output_extent(shape[0], c.kernel, c.stride, c.pad)?,
                conv2d_output_extent(shape[1], c.kernel, c.stride, c.pad)?,
                c.out_channels,
            ];
            out.push(shape);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Conv stack weights plus a scalar affine head `f = w·features + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorParams {
    pub convs: Vec<ConvParams>,
    /// `[m, 1]`
    pub head_weight: Tensor,
    /// `[1]`
    pub head_bias: Tensor,
}

pub const DESCRIPTOR_INIT_STD: f64 = 0.02;

impl DescriptorParams {
    pub fn init(config: &DescriptorConfig, image_shape: [usize; 3], seed: u64) -> Result<Self> {
        let mut s = Stream::new(seed);
        Self::build(config, image_shape, |shape| {
            s.normal_tensor(shape, DESCRIPTOR_INIT_STD)
        })
    }

    pub fn zeros(config: &DescriptorConfig, image_shape: [usize; 3]) -> Result<Self> {
        Self::build(config, image_shape, |shape: &[usize]| Tensor::zeros(shape))
    }

    fn build(
        config: &DescriptorConfig,
        image_shape: [usize; 3],
        mut weights: impl FnMut(&[usize]) -> Tensor,
    ) -> Result<Self> {
        let shapes = config.feature_shapes(image_shape)?;
        let mut c_in = image_shape[2];
        let mut convs = Vec::with_capacity(config.convs.len());
        for c in &config.convs {
            convs.push(ConvParams {
                kernel: weights(&[c_in, c.kernel, c.kernel, c.out_channels]),
                bias: Tensor::zeros(&[c.out_channels]),
            });
            c_in = c.out_channels;
        }
        let m: usize = shapes
            .last()
            .copied()
            .unwrap_or(image_shape)
            .iter()
            .product();
        Ok(DescriptorParams {
            convs,
            head_weight: weights(&[m, 1]),
            head_bias: Tensor::zeros(&[1]),
        })
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = Vec::with_capacity(2 * self.convs.len() + 2);
        for c in &self.convs {
            v.push(&c.kernel);
            v.push(&c.bias);
        }
        v.push(&self.head_weight);
        v.push(&self.head_bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = Vec::with_capacity(2 * self.convs.len() + 2);
        for c in &mut self.convs {
            v.push(&mut c.kernel);
            v.push(&mut c.bias);
        }
        v.push(&mut self.head_weight);
        v.push(&mut self.head_bias);
        v
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 1..=self.convs.len() {
            v.push(format!("descriptor.conv{i}.kernel"));
            v.push(format!("descriptor.conv{i}.bias"));
        }
        v.push("descriptor.head.weight".into());
        v.push("descriptor.head.bias".into());
        v
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn flatten(&self) -> Tensor {
        let data: Vec<f64> = self
            .tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        Tensor::vector(&data)
    }

    pub fn unflatten_into(&mut self, flat: &Tensor) -> Result<()> {
        let n = self.num_scalars();
        if flat.numel() != n {
            return Err(Error::Dimension {
                op: "descriptor params",
                axis: "flat length",
                expected: n,
                got: flat.numel(),
            });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let len = t.numel();
            t.data_mut().copy_from_slice(&flat.data()[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

/// Bottom-up ConvNet energy `f(Y; φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub config: DescriptorConfig,
    pub params: DescriptorParams,
    pub image_shape: [usize; 3],
}

struct Trace {
    /// Input of each conv layer.
    inputs: Vec<Tensor>,
    masks: Vec<Tensor>,
    features: Tensor,
}

impl Descriptor {
    pub fn new(
        config: DescriptorConfig,
        params: DescriptorParams,
        image_shape: [usize; 3],
    ) -> Result<Self> {
        let expect = DescriptorParams::zeros(&config, image_shape)?;
        for ((name, want), got) in expect
            .names()
            .iter()
            .zip(expect.tensors())
            .zip(params.tensors())
        {
            if want.shape() != got.shape() {
                return Err(Error::Config(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if expect.convs.len() != params.convs.len() {
            return Err(Error::Config(
                "descriptor layer count does not match its config".into(),
            ));
        }
        Ok(Descriptor {
            config,
            params,
            image_shape,
        })
    }

    pub fn init(config: DescriptorConfig, image_shape: [usize; 3], seed: u64) -> Result<Self> {
        let params = DescriptorParams::init(&config, image_shape, seed)?;
        Self::new(config, params, image_shape)
    }

    fn check_image(&self, y: &Tensor) -> Result<()> {
        if y.shape() != self.image_shape {
            return Err(Error::Dimension {
                op: "energy_score",
                axis: "image",
                expected: self.image_shape.iter().product(),
                got: y.numel(),
            });
        }
        Ok(())
    }

    fn forward(&self, y: &Tensor) -> Result<(f64, Trace)> {
        self.check_image(y)?;
        let mut h = y.clone();
        let mut inputs = Vec::with_capacity(self.config.convs.len());
        let mut masks = Vec::with_capacity(self.config.convs.len());
        for (spec, p) in self.config.convs.iter().zip(&self.params.convs) {
            let a = conv2d(&h, &p.kernel, &p.bias, spec.stride, spec.pad)?;
            inputs.push(h);
            let r = relu(&a);
            masks.push(r.mask);
            h = r.values;
        }
        let features = Tensor::vector(h.data());
        let f = affine(&features, &self.params.head_weight, &self.params.head_bias)?.data()[0];
        Ok((
            f,
            Trace {
                inputs,
                masks,
                features,
            },
        ))
    }

    fn backward(
        &self,
        trace: &Trace,
        want_params: bool,
    ) -> Result<(Tensor, Option<DescriptorParams>)> {
        let head = affine_backward(
            &trace.features,
            &self.params.head_weight,
            &Tensor::vector(&[1.0]),
        )?;
        let mut grads = want_params.then(|| DescriptorParams {
            convs: Vec::with_capacity(self.params.convs.len()),
            head_weight: head.weight.clone(),
            head_bias: head.bias.clone(),
        });
        let mut g = head.input;
        let mut conv_grads = Vec::with_capacity(self.params.convs.len());
        for i in (0..self.config.convs.len()).rev() {
            let spec = &self.config.convs[i];
            let p = &self.params.convs[i];
            let mask = &trace.masks[i];
            let ga = Tensor::from_vec(mask.shape(), g.into_data())?.mul(mask)?;
            let cg = conv2d_backward(
                &trace.inputs[i],
                &p.kernel,
                &ga,
                spec.stride,
                spec.pad,
                want_params,
            )?;
            g = cg.input;
            if want_params {
                conv_grads.push(ConvParams {
                    kernel: cg.kernel,
                    bias: cg.bias,
                });
            }
        }
        if let Some(gr) = grads.as_mut() {
            conv_grads.reverse();
            gr.convs = conv_grads;
        }
        let gy = Tensor::from_vec(&self.image_shape, g.into_data())?;
        Ok((gy, grads))
    }

    pub fn energy_score(&self, y: &Tensor) -> Result<f64> {
        Ok(self.forward(y)?.0)
    }

    /// `∂f/∂φ` at one image.
    pub fn grad_params(&self, y: &Tensor) -> Result<DescriptorParams> {
        let (_, trace) = self.forward(y)?;
        let (_, g) = self.backward(&trace, true)?;
        Ok(g.expect("parameter gradients requested"))
    }

    /// Signature of every ReLU mask at `y`, for finite-difference checks.
    pub fn mask_signature(&self, y: &Tensor) -> Result<Vec<bool>> {
        let (_, trace) = self.forward(y)?;
        Ok(trace
            .masks
            .iter()
            .flat_map(|m| m.data().iter().map(|&v| v != 0.0))
            .collect())
    }
}

impl Energy for Descriptor {
    fn image_numel(&self) -> Option<usize> {
        Some(self.image_shape.iter().product())
    }

    fn score(&self, y: &Tensor) -> Result<f64> {
        self.energy_score(y)
    }

    fn score_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        let (f, trace) = self.forward(y)?;
        let (g, _) = self.backward(&trace, false)?;
        Ok((f, g))
    }
}

impl TrainableEnergy for Descriptor {
    fn param_vector(&self) -> Tensor {
        self.params.flatten()
    }

    fn set_param_vector(&mut self, flat: &Tensor) -> Result<()> {
        self.params.unflatten_into(flat)
    }

    fn param_grad(&self, y: &Tensor) -> Result<Tensor> {
        Ok(self.grad_params(y)?.flatten())
    }
}

/// `f(Y)` as a function of the image, for gradient checking.
pub struct ImageScore<'a> {
    pub descriptor: &'a Descriptor,
}

impl Differentiable for ImageScore<'_> {
    fn value(&self, y: &Tensor) -> Result<(f64, Vec<bool>)> {
        Ok((
            self.descriptor.energy_score(y)?,
            self.descriptor.mask_signature(y)?,
        ))
    }

    fn gradient(&self, y: &Tensor) -> Result<Tensor> {
        Ok(self.descriptor.score_and_grad(y)?.1)
    }
}

/// `f(Y)` as a function of the flattened parameters, for gradient checking.
pub struct ParamScore<'a> {
    pub descriptor: &'a Descriptor,
    pub y: &'a Tensor,
}

impl ParamScore<'_> {
    fn with_params(&self, phi: &Tensor) -> Result<Descriptor> {
        let mut d = self.descriptor.clone();
        d.set_param_vector(phi)?;
        Ok(d)
    }
}

impl Differentiable for ParamScore<'_> {
    fn value(&self, phi: &Tensor) -> Result<(f64, Vec<bool>)> {
        let d = self.with_params(phi)?;
        Ok((d.energy_score(self.y)?, d.mask_signature(self.y)?))
    }

    fn gradient(&self, phi: &Tensor) -> Result<Tensor> {
        self.with_params(phi)?.param_grad(self.y)
    }
}
