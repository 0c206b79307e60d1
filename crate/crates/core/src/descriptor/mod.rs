//! Energy-based descriptor `P(Y; φ) ∝ exp[f(Y; φ)]·q(Y)` with a Gaussian reference `q`,
//! image-space Langevin sampling, and cooperative training with the generator.
//!
//! The normalizing constant of the descriptor is never computed; every update uses only
//! `f` and its gradients.

mod coop;
mod net;
mod toy;

pub use coop::{coop_resume, coop_train, CoopAbort, CoopOutcome, CoopTrainer};
pub use net::{
    ConvParams, ConvSpec, Descriptor, DescriptorConfig, DescriptorParams, ImageScore, ParamScore,
    DESCRIPTOR_INIT_STD,
};
pub use toy::{PolynomialEnergy, QuadraticEnergy};

use crate::error::{Error, Result};
use crate::inference::{langevin_infer, LangevinConfig, LatentPosterior};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// A scalar score `f(Y)` over images.
pub trait Energy {
    /// Required image size, or `None` when any size is accepted.
    fn image_numel(&self) -> Option<usize>;

    fn score(&self, y: &Tensor) -> Result<f64> {
        Ok(self.score_and_grad(y)?.0)
    }

    /// `f(Y)` and `∂f/∂Y`.
    fn score_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)>;
}

/// An energy whose parameters can be learned by [`descriptor_step`].
pub trait TrainableEnergy: Energy {
    fn param_vector(&self) -> Tensor;

    fn set_param_vector(&mut self, flat: &Tensor) -> Result<()>;

    /// `∂f/∂φ` at `y`, flattened in the order of [`TrainableEnergy::param_vector`].
    fn param_grad(&self, y: &Tensor) -> Result<Tensor>;
}

/// `log[exp(f(Y))·q(Y)] = f(Y) − ‖Y‖²/(2σ_q²)` as a Langevin target.
struct TiltedReference<'a, E: ?Sized> {
    energy: &'a E,
    sigma_q: f64,
    dim: usize,
}

impl<E: Energy + ?Sized> LatentPosterior for TiltedReference<'_, E> {
    fn latent_dim(&self) -> usize {
        self.dim
    }

    fn log_density_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        let (f, mut g) = self.energy.score_and_grad(y)?;
        let prec = 1.0 / (self.sigma_q * self.sigma_q);
        g.add_scaled(y, -prec)?;
        Ok((f - 0.5 * prec * y.norm_sq(), g))
    }
}

/// Runs `Y ← Y + (δ²/2)·(∂f/∂Y − Y/σ_q²) + δ·ε` for `config.steps` steps from each
/// starting image. Image `i` draws its noise from `derive_seed(seed, i)`.
pub fn langevin_sample_images<E: Energy + ?Sized>(
    energy: &E,
    init: &[Tensor],
    config: &DescriptorConfig,
    seed: u64,
) -> Result<Vec<Tensor>> {
    config.validate()?;
    init.iter()
        .enumerate()
        .map(|(i, y0)| {
            let target = TiltedReference {
                energy,
                sigma_q: config.sigma_q,
                dim: energy.image_numel().unwrap_or(y0.numel()),
            };
            let lcfg = LangevinConfig {
                delta: config.delta,
                steps: config.steps,
                noise: config.noise,
                seed: derive_seed(seed, i as u64),
                step_halving: true,
            };
            langevin_infer(&target, y0, &lcfg).map_err(|e| e.at_example(i))
        })
        .collect()
}

fn mean_param_grad<E: TrainableEnergy + ?Sized>(energy: &E, batch: &[&Tensor]) -> Result<Tensor> {
    let mut acc = Tensor::zeros(&[energy.param_vector().numel()]);
    for y in batch {
        acc.add_scaled(&energy.param_grad(y)?, 1.0)?;
    }
    Ok(acc.scale(1.0 / batch.len() as f64))
}

/// One ascent step `φ ← φ + lr·(mean_data ∂f/∂φ − mean_synth ∂f/∂φ)`. Returns the
/// gradient that was applied.
pub fn descriptor_step<E: TrainableEnergy + ?Sized>(
    energy: &mut E,
    data: &[&Tensor],
    synth: &[&Tensor],
    learning_rate: f64,
) -> Result<Tensor> {
    if data.is_empty() || data.len() != synth.len() {
        return Err(Error::Config(format!(
            "descriptor batches must be non-empty and equal in size (data {}, synthesized {})",
            data.len(),
            synth.len()
        )));
    }
    let grad = mean_param_grad(energy, data)?.sub(&mean_param_grad(energy, synth)?)?;
    let mut phi = energy.param_vector();
    phi.add_scaled(&grad, learning_rate)?;
    energy.set_param_vector(&phi)?;
    Ok(grad)
}

/// Mean score over a set of images.
pub fn mean_score<E: Energy + ?Sized>(energy: &E, images: &[Tensor]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Config("cannot score an empty image set".into()));
    }
    let mut s = 0.0;
    for y in images {
        s += energy.score(y)?;
    }
    Ok(s / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad_check::{grad_check, GradCheckOptions, GradCheckOutcome};
    use crate::rng::Stream;

    fn small() -> Descriptor {
        let cfg = DescriptorConfig {
            convs: vec![
                ConvSpec {
                    kernel: 4,
                    stride: 2,
                    pad: 1,
                    out_channels: 4,
                },
                ConvSpec {
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    out_channels: 3,
                },
            ],
            ..DescriptorConfig::default()
        };
        let mut d = Descriptor::init(cfg, [6, 6, 2], 3).unwrap();
        let mut s = Stream::new(4);
        for t in d.params.tensors_mut() {
            *t = s.normal_tensor(t.shape(), 0.5);
        }
        d
    }

    #[test]
    fn zero_weights_score_is_head_bias() {
        let cfg = DescriptorConfig::default();
        let mut p = DescriptorParams::zeros(&cfg, [16, 16, 3]).unwrap();
        p.head_bias = Tensor::vector(&[0.7]);
        let d = Descriptor::new(cfg, p, [16, 16, 3]).unwrap();
        let y = Stream::new(1).normal_tensor(&[16, 16, 3], 1.0);
        assert_eq!(d.energy_score(&y).unwrap(), 0.7);
        assert_eq!(d.score_and_grad(&y).unwrap().1.count_nonzero(), 0);
    }

    #[test]
    fn default_shapes() {
        let d = Descriptor::init(DescriptorConfig::default(), [16, 16, 3], 0).unwrap();
        assert_eq!(d.params.convs[0].kernel.shape(), &[3, 4, 4, 32]);
        assert_eq!(d.params.convs[1].kernel.shape(), &[32, 4, 4, 64]);
        assert_eq!(d.params.head_weight.shape(), &[4 * 4 * 64, 1]);
        assert!(d.energy_score(&Tensor::zeros(&[16, 16, 2])).is_err());
    }

    #[test]
    fn image_gradient_matches_finite_differences() {
        let d = small();
        let y = Stream::new(5).normal_tensor(&[6, 6, 2], 1.0);
        let r = grad_check(
            &ImageScore { descriptor: &d },
            &y,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.outcome(1e-5), GradCheckOutcome::Pass, "{r:?}");
        assert!(r.stable_fraction() > 0.95);
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let d = small();
        let y = Stream::new(6).normal_tensor(&[6, 6, 2], 1.0);
        let r = grad_check(
            &ParamScore {
                descriptor: &d,
                y: &y,
            },
            &d.param_vector(),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.outcome(1e-5), GradCheckOutcome::Pass, "{r:?}");
    }

    #[test]
    fn batch_order_does_not_change_scores() {
        let d = small();
        let mut s = Stream::new(7);
        let a = s.normal_tensor(&[6, 6, 2], 1.0);
        let b = s.normal_tensor(&[6, 6, 2], 1.0);
        let fa = d.energy_score(&a).unwrap();
        let fb = d.energy_score(&b).unwrap();
        let ab = mean_score(&d, &[a.clone(), b.clone()]).unwrap();
        let ba = mean_score(&d, &[b, a]).unwrap();
        assert_eq!(ab, ba);
        assert!((ab - 0.5 * (fa + fb)).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_leave_images() {
        let d = small();
        let y = vec![Stream::new(8).normal_tensor(&[6, 6, 2], 1.0)];
        let cfg = DescriptorConfig {
            steps: 0,
            ..d.config.clone()
        };
        assert_eq!(langevin_sample_images(&d, &y, &cfg, 1).unwrap(), y);
    }

    #[test]
    fn constant_energy_decays_geometrically() {
        let cfg = DescriptorConfig::default();
        let d = Descriptor::new(
            cfg.clone(),
            DescriptorParams::zeros(&cfg, [4, 4, 3]).unwrap(),
            [4, 4, 3],
        )
        .unwrap();
        let scfg = DescriptorConfig {
            steps: 7,
            noise: false,
            delta: 0.3,
            ..cfg
        };
        let y0 = Stream::new(9).normal_tensor(&[4, 4, 3], 1.0);
        let out = langevin_sample_images(&d, std::slice::from_ref(&y0), &scfg, 0).unwrap();
        let factor = (1.0f64 - 0.3 * 0.3 / 2.0).powi(7);
        assert!(out[0].max_abs_diff(&y0.scale(factor)).unwrap() < 1e-14);
    }

    #[test]
    fn sampling_is_seeded_per_image() {
        let d = small();
        let mut s = Stream::new(10);
        let ys: Vec<Tensor> = (0..3).map(|_| s.normal_tensor(&[6, 6, 2], 0.5)).collect();
        let a = langevin_sample_images(&d, &ys, &d.config, 42).unwrap();
        let b = langevin_sample_images(&d, &ys, &d.config, 42).unwrap();
        assert_eq!(a, b);
        // The first chain does not depend on what follows it.
        let c = langevin_sample_images(&d, &ys[..1], &d.config, 42).unwrap();
        assert_eq!(a[0], c[0]);
        assert_ne!(
            a[0],
            langevin_sample_images(&d, &ys[..1], &d.config, 43).unwrap()[0]
        );
    }

    #[test]
    fn identical_batches_are_a_no_op() {
        let mut d = small();
        let before = d.params.clone();
        let mut s = Stream::new(11);
        let ys: Vec<Tensor> = (0..4).map(|_| s.normal_tensor(&[6, 6, 2], 1.0)).collect();
        let refs: Vec<&Tensor> = ys.iter().collect();
        descriptor_step(&mut d, &refs, &refs, 0.5).unwrap();
        assert_eq!(d.params, before);
    }

    #[test]
    fn linear_energy_update_is_hand_computable() {
        let mut e = PolynomialEnergy { a: 0.3, b: 0.0 };
        let data = [Tensor::vector(&[1.0, 2.0]), Tensor::vector(&[3.0, -1.0])];
        let synth = [Tensor::vector(&[0.5, 0.5]), Tensor::vector(&[0.0, 0.25])];
        let lr = 0.1;
        descriptor_step(&mut e, &[&data[0], &data[1]], &[&synth[0], &synth[1]], lr).unwrap();
        let mean_data = (3.0 + 2.0) / 2.0;
        let mean_synth = (1.0 + 0.25) / 2.0;
        assert_eq!(e.a, 0.3 + lr * (mean_data - mean_synth));
    }

    #[test]
    fn mismatched_batches_rejected() {
        let mut e = PolynomialEnergy { a: 0.0, b: 0.0 };
        let y = Tensor::vector(&[1.0]);
        assert!(descriptor_step(&mut e, &[&y], &[], 0.1).is_err());
    }
}
