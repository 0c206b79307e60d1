//! Closed-form energies used to validate the sampler and the descriptor update.

use super::{Energy, TrainableEnergy};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `f(Y) = −‖Y − μ‖²/2`. Tilting `q = N(0, σ_q²)` gives a Gaussian with mean
/// `μ·σ_q²/(1 + σ_q²)` and variance `σ_q²/(1 + σ_q²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnergy {
    pub mu: Tensor,
}

impl QuadraticEnergy {
    pub fn stationary_mean(&self, sigma_q: f64) -> Tensor {
        let s2 = sigma_q * sigma_q;
        self.mu.scale(s2 / (1.0 + s2))
    }

    pub fn stationary_var(&self, sigma_q: f64) -> f64 {
        let s2 = sigma_q * sigma_q;
        s2 / (1.0 + s2)
    }
}

impl Energy for QuadraticEnergy {
    fn image_numel(&self) -> Option<usize> {
        Some(self.mu.numel())
    }

    fn score_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        let diff = self.mu.sub(y)?;
        Ok((-0.5 * diff.norm_sq(), diff))
    }
}

/// `f(Y) = a·ΣY + b·ΣY²`, a two-parameter per-pixel energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialEnergy {
    pub a: f64,
    pub b: f64,
}

impl PolynomialEnergy {
    /// Per-pixel mean of the tilted reference, or `None` when it is not normalizable.
    pub fn model_mean(&self, sigma_q: f64) -> Option<f64> {
        let precision = 1.0 / (sigma_q * sigma_q) - 2.0 * self.b;
        (precision > 0.0).then(|| self.a / precision)
    }
}

impl Energy for PolynomialEnergy {
    fn image_numel(&self) -> Option<usize> {
        None
    }

    fn score_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        let f = self.a * y.sum() + self.b * y.norm_sq();
        Ok((f, y.map(|v| self.a + 2.0 * self.b * v)))
    }
}

impl TrainableEnergy for PolynomialEnergy {
    fn param_vector(&self) -> Tensor {
        Tensor::vector(&[self.a, self.b])
    }

    fn set_param_vector(&mut self, flat: &Tensor) -> Result<()> {
        match flat.data() {
            &[a, b] => {
                self.a = a;
                self.b = b;
                Ok(())
            }
            other => Err(Error::Dimension {
                op: "polynomial energy",
                axis: "params",
                expected: 2,
                got: other.len(),
            }),
        }
    }

    fn param_grad(&self, y: &Tensor) -> Result<Tensor> {
        Ok(Tensor::vector(&[y.sum(), y.norm_sq()]))
    }
}
