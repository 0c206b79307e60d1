//! The top-down sparse generator `g(Z; θ, t_k)`.
//!
//! ```text
//! fm⁰ = reshape(W·Z + b)
//! fm_sⁱ = ReLU(TopK(fmⁱ, Kⁱ))          for every feature map i
//! fmⁱ⁺¹ = deconv(fm_sⁱ, kerⁱ) + biasⁱ
//! Y = tanh(P)                          P = output of the last deconv
//! ```
//!
//! Feature maps are indexed from 0 (the FC output). A recorded [`ForwardTrace`] keeps the
//! Top-K and ReLU masks; with the masks frozen the map from any feature map to `P` is
//! affine, which is what the gradient code and the grammar module rely on.

mod config;
mod params;

pub use config::{DeconvSpec, GeneratorConfig, MAX_DECONV_LAYERS};
pub use params::{DeconvParams, GeneratorParams, INIT_STD};

use crate::error::{Error, Result};
use crate::grad_check::Differentiable;
use crate::ops::{
    affine, affine_backward, deconv2d_vjp_input, deconv2d_vjp_params, deconv2d_with_bias_weight,
    relu, tanh_backward, tanh_map, topk,
};
use crate::tensor::Tensor;

/// Masks and maps of one sparse feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Preactivation `fmⁱ`.
    pub preact: Tensor,
    pub topk_mask: Tensor,
    pub relu_mask: Tensor,
    /// `fm_sⁱ = fmⁱ ⊙ mask_T ⊙ mask_R`.
    pub sparse: Tensor,
}

impl LayerTrace {
    /// Positions that survived both Top-K and ReLU.
    pub fn active_mask(&self) -> Tensor {
        self.topk_mask
            .mul(&self.relu_mask)
            .expect("trace masks share a shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z: Tensor,
    pub layers: Vec<LayerTrace>,
    /// Pre-tanh image `P`.
    pub preimage: Tensor,
    pub output: Tensor,
}

impl ForwardTrace {
    /// Every mask bit, in layer order. Two traces with equal signatures share one
    /// linearization.
    pub fn mask_signature(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.topk_mask
                    .data()
                    .iter()
                    .chain(l.relu_mask.data())
                    .map(|&m| m != 0.0)
            })
            .collect()
    }
}

/// A generator architecture with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: GeneratorParams,
}

impl Generator {
    pub fn new(config: GeneratorConfig, params: GeneratorParams) -> Result<Self> {
        config.validate()?;
        let expected = GeneratorParams::zeros(&config)?;
        for ((name, want), got) in expected.named().into_iter().zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, config expects {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Generator { config, params })
    }

    pub fn init(config: GeneratorConfig, seed: u64) -> Result<Self> {
        let params = GeneratorParams::init(&config, seed)?;
        Ok(Generator { config, params })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.config
            .output_shape()
            .expect("validated at construction")
    }

    /// Number of pixels·channels `D`.
    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    fn check_latent(&self, z: &Tensor) -> Result<()> {
        if z.numel() != self.config.latent_dim {
            return Err(Error::Dimension {
                op: "generator",
                axis: "latent",
                expected: self.config.latent_dim,
                got: z.numel(),
            });
        }
        if !z.is_finite() {
            return Err(Error::Config("latent vector has non-finite entries".into()));
        }
        Ok(())
    }

    fn check_image(&self, y: &Tensor) -> Result<()> {
        let shape = self.output_shape();
        if y.shape() != shape {
            return Err(Error::Dimension {
                op: "generator",
                axis: "image",
                expected: shape.iter().product(),
                got: y.numel(),
            });
        }
        Ok(())
    }

    /// Runs `g(Z)`; the trace is returned only when `record` is set.
    pub fn forward(&self, z: &Tensor, record: bool) -> Result<(Tensor, Option<ForwardTrace>)> {
        let trace = self.trace(z)?;
        if record {
            Ok((trace.output.clone(), Some(trace)))
        } else {
            Ok((trace.output, None))
        }
    }

    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.trace(z)?.output)
    }

    /// Forward pass recording every mask.
    pub fn trace(&self, z: &Tensor) -> Result<ForwardTrace> {
        self.check_latent(z)?;
        let z = Tensor::vector(z.data());
        let mut fm = affine(&z, &self.params.fc_weight, &self.params.fc_bias)?
            .reshape(&self.config.fc_shape)?;
        let mut layers = Vec::with_capacity(self.config.layers.len());
        for ((spec, p), &k) in self
            .config
            .layers
            .iter()
            .zip(&self.params.layers)
            .zip(&self.config.top_k)
        {
            let selected = topk(&fm, k);
            let rect = relu(&selected.values);
            let next = deconv2d_with_bias_weight(
                &rect.values,
                &p.kernel,
                &p.bias,
                spec.stride,
                spec.pad,
                1.0,
            )?;
            layers.push(LayerTrace {
                preact: fm,
                topk_mask: selected.mask,
                relu_mask: rect.mask,
                sparse: rect.values,
            });
            fm = next;
        }
        let output = tanh_map(&fm);
        Ok(ForwardTrace {
            z,
            layers,
            preimage: fm,
            output,
        })
    }

    /// Pushes `input` (shaped like feature map `layer`, already sparse) through the
    /// remaining layers with every mask frozen from `trace`. Each deconvolution adds
    /// `bias_weight · bias`. Returns the pre-tanh image.
    pub fn propagate_frozen(
        &self,
        trace: &ForwardTrace,
        layer: usize,
        input: &Tensor,
        bias_weight: f64,
    ) -> Result<Tensor> {
        let n = self.config.layers.len();
        if layer >= n || trace.layers.len() != n {
            return Err(Error::Index(format!(
                "feature map {layer} (generator has {n}, trace has {})",
                trace.layers.len()
            )));
        }
        let mut fm = input.clone();
        for m in layer..n {
            if m > layer {
                let lt = &trace.layers[m];
                fm = fm.mul(&lt.topk_mask)?.mul(&lt.relu_mask)?;
            }
            let spec = &self.config.layers[m];
            let p = &self.params.layers[m];
            fm = deconv2d_with_bias_weight(
                &fm,
                &p.kernel,
                &p.bias,
                spec.stride,
                spec.pad,
                bias_weight,
            )?;
        }
        Ok(fm)
    }

    /// Re-evaluates the network at `z` with the masks of `trace` instead of recomputing
    /// Top-K and ReLU. At the trace's own `z` this reproduces `trace.output` bit for bit.
    pub fn reevaluate_frozen(&self, trace: &ForwardTrace, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        let first = &trace.layers[0];
        let fm = affine(
            &Tensor::vector(z.data()),
            &self.params.fc_weight,
            &self.params.fc_bias,
        )?
        .reshape(&self.config.fc_shape)?
        .mul(&first.topk_mask)?
        .mul(&first.relu_mask)?;
        Ok(tanh_map(&self.propagate_frozen(trace, 0, &fm, 1.0)?))
    }

    /// Reverse pass through a recorded trace with masks frozen. Returns `∂/∂Z` and, when
    /// requested, `∂/∂θ` of `⟨grad_y, g(Z)⟩`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        grad_y: &Tensor,
        want_params: bool,
    ) -> Result<(Tensor, Option<GeneratorParams>)> {
        self.check_image(grad_y)?;
        let mut grads = want_params.then(|| self.params.zeros_like());
        let mut g = tanh_backward(&trace.output, grad_y)?;
        for m in (0..self.config.layers.len()).rev() {
            let spec = &self.config.layers[m];
            let p = &self.params.layers[m];
            let lt = &trace.layers[m];
            if let Some(gr) = grads.as_mut() {
                let (gk, gb) =
                    deconv2d_vjp_params(&lt.sparse, &g, p.kernel.shape(), spec.stride, spec.pad)?;
                gr.layers[m].kernel = gk;
                gr.layers[m].bias = gb;
            }
            let active = lt.active_mask();
            g = deconv2d_vjp_input(
                &g,
                &p.kernel,
                lt.preact.shape(),
                spec.stride,
                spec.pad,
                Some(&active),
            )?;
        }
        let g_fc = g.reshape(&[self.config.fc_len()])?;
        let ag = affine_backward(&trace.z, &self.params.fc_weight, &g_fc)?;
        if let Some(gr) = grads.as_mut() {
            gr.fc_weight = ag.weight;
            gr.fc_bias = ag.bias;
        }
        Ok((ag.input, grads))
    }

    /// `−‖Y − g(Z)‖²/(2σ²) − ‖Z‖²/2`, without the additive constant.
    pub fn log_joint(&self, z: &Tensor, y: &Tensor) -> Result<f64> {
        self.check_image(y)?;
        let gen = self.generate(z)?;
        Ok(self.log_joint_from(&gen, z, y))
    }

    fn log_joint_from(&self, gen: &Tensor, z: &Tensor, y: &Tensor) -> f64 {
        let s2 = self.config.sigma * self.config.sigma;
        let resid: f64 = y
            .data()
            .iter()
            .zip(gen.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        -resid / (2.0 * s2) - 0.5 * z.norm_sq()
    }

    /// `(Y − g(Z))/σ²`, the upstream gradient of the data term.
    fn scaled_residual(&self, trace: &ForwardTrace, y: &Tensor) -> Result<Tensor> {
        self.check_image(y)?;
        let inv = 1.0 / (self.config.sigma * self.config.sigma);
        y.zip_map(&trace.output, |a, b| (a - b) * inv)
    }

    /// `∂/∂Z log p(Y, Z)` with masks frozen at the forward pass.
    pub fn grad_z_log_joint(&self, z: &Tensor, y: &Tensor) -> Result<Tensor> {
        Ok(self.log_joint_and_grad_z(z, y)?.1)
    }

    /// Value and latent gradient of the log-joint from one forward pass.
    pub fn log_joint_and_grad_z(&self, z: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
        let trace = self.trace(z)?;
        let r = self.scaled_residual(&trace, y)?;
        let (gz, _) = self.backward(&trace, &r, false)?;
        let value = self.log_joint_from(&trace.output, &trace.z, y);
        let grad = gz.sub(&trace.z)?.reshape(z.shape())?;
        Ok((value, grad))
    }

    /// `(1/σ²)(Y − g(Z))·∂g/∂θ`: the gradient of `log p(Y, Z)` with respect to θ.
    pub fn grad_theta(&self, z: &Tensor, y: &Tensor) -> Result<GeneratorParams> {
        let trace = self.trace(z)?;
        let r = self.scaled_residual(&trace, y)?;
        let (_, grads) = self.backward(&trace, &r, true)?;
        Ok(grads.expect("requested"))
    }
}

/// `log p(Y, Z)` as a function of `Z`, for gradient checking.
pub struct LatentLogJoint<'a> {
    pub generator: &'a Generator,
    pub y: &'a Tensor,
}

impl Differentiable for LatentLogJoint<'_> {
    fn value(&self, z: &Tensor) -> Result<(f64, Vec<bool>)> {
        let trace = self.generator.trace(z)?;
        let v = self.generator.log_joint_from(&trace.output, z, self.y);
        Ok((v, trace.mask_signature()))
    }

    fn gradient(&self, z: &Tensor) -> Result<Tensor> {
        self.generator.grad_z_log_joint(z, self.y)
    }
}

/// `log p(Y, Z)` as a function of the flattened parameters, for gradient checking.
pub struct ParamLogJoint<'a> {
    pub generator: &'a Generator,
    pub z: &'a Tensor,
    pub y: &'a Tensor,
}

impl ParamLogJoint<'_> {
    fn with_params(&self, flat: &Tensor) -> Result<Generator> {
        let mut g = self.generator.clone();
        unflatten_into(&mut g.params, flat)?;
        Ok(g)
    }
}

impl Differentiable for ParamLogJoint<'_> {
    fn value(&self, flat: &Tensor) -> Result<(f64, Vec<bool>)> {
        let g = self.with_params(flat)?;
        let trace = g.trace(self.z)?;
        let v = g.log_joint_from(&trace.output, self.z, self.y);
        Ok((v, trace.mask_signature()))
    }

    fn gradient(&self, flat: &Tensor) -> Result<Tensor> {
        let g = self.with_params(flat)?;
        Ok(flatten(&g.grad_theta(self.z, self.y)?))
    }
}

/// Concatenates every parameter tensor into one vector.
pub fn flatten(p: &GeneratorParams) -> Tensor {
    let data: Vec<f64> = p
        .tensors()
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    Tensor::vector(&data)
}

pub fn unflatten_into(p: &mut GeneratorParams, flat: &Tensor) -> Result<()> {
    let total = p.num_scalars();
    if flat.numel() != total {
        return Err(Error::Dimension {
            op: "unflatten",
            axis: "parameter count",
            expected: total,
            got: flat.numel(),
        });
    }
    let mut off = 0;
    for t in p.tensors_mut() {
        let n = t.numel();
        t.data_mut().copy_from_slice(&flat.data()[off..off + n]);
        off += n;
    }
    Ok(())
}
