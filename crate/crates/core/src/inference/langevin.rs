use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Chains whose latent norm exceeds this are declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinConfig {
    /// Step size δ.
    pub delta: f64,
    pub steps: usize,
    pub noise: bool,
    pub seed: u64,
    /// Halve δ once for a chain before declaring divergence.
    pub step_halving: bool,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig {
            delta: 0.1,
            steps: 20,
            noise: true,
            seed: 0,
            step_halving: true,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Config(format!(
                "Langevin delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// An unnormalized log posterior over a latent vector.
pub trait LatentPosterior {
    fn latent_dim(&self) -> usize;

    /// `log p(Z, Y)` up to a constant, and its gradient in `Z`.
    fn log_density_and_grad(&self, z: &Tensor) -> Result<(f64, Tensor)>;
}

/// The generator's posterior `p(Z | Y)` for one observed image.
pub struct GeneratorPosterior<'a> {
    pub generator: &'a Generator,
    pub y: &'a Tensor,
}

impl LatentPosterior for GeneratorPosterior<'_> {
    fn latent_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    fn log_density_and_grad(&self, z: &Tensor) -> Result<(f64, Tensor)> {
        self.generator.log_joint_and_grad_z(z, self.y)
    }
}

/// Runs `steps` iterations of `Z ← Z + (δ²/2)·∇log p + δ·ε` and calls `on_step` after
/// each one with the step index, the new `Z` and the log density *before* the step.
pub fn langevin_run<P, F>(
    model: &P,
    z_init: &Tensor,
    cfg: &LangevinConfig,
    mut on_step: F,
) -> Result<Tensor>
where
    P: LatentPosterior + ?Sized,
    F: FnMut(usize, &Tensor, f64),
{
    cfg.validate()?;
    if z_init.numel() != model.latent_dim() {
        return Err(Error::Dimension {
            op: "langevin",
            axis: "latent",
            expected: model.latent_dim(),
            got: z_init.numel(),
        });
    }
    if !z_init.is_finite() {
        return Err(Error::Config(
            "initial latent has non-finite entries".into(),
        ));
    }
    let mut z = z_init.clone();
    let mut delta = cfg.delta;
    let mut halved = false;
    let mut noise = Stream::new(cfg.seed);
    let mut eps = Tensor::zeros(z.shape());
    for step in 0..cfg.steps {
        let (logp, grad) = model.log_density_and_grad(&z)?;
        if cfg.noise {
            for v in eps.data_mut() {
                *v = noise.normal();
            }
        }
        loop {
            let mut next = z.clone();
            next.add_scaled(&grad, 0.5 * delta * delta)?;
            if cfg.noise {
                next.add_scaled(&eps, delta)?;
            }
            let norm = next.norm();
            if norm.is_finite() && norm <= DIVERGENCE_NORM {
                z = next;
                break;
            }
            if cfg.step_halving && !halved {
                halved = true;
                delta *= 0.5;
                log::debug!("Langevin step {step}: |z| = {norm:.3e}, halving delta to {delta}");
                continue;
            }
            return Err(Error::Divergence { step, norm });
        }
        on_step(step, &z, logp);
    }
    Ok(z)
}

pub fn langevin_infer<P: LatentPosterior + ?Sized>(
    model: &P,
    z_init: &Tensor,
    cfg: &LangevinConfig,
) -> Result<Tensor> {
    langevin_run(model, z_init, cfg, |_, _, _| {})
}
