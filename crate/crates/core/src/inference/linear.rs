//! Linear-Gaussian latent model `Y = A·Z + ε`, the closed-form reference for the sampler.

use nalgebra::{DMatrix, DVector};

use super::langevin::{langevin_run, LangevinConfig, LatentPosterior};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    a: DMatrix<f64>,
    sigma: f64,
    y: DVector<f64>,
}

impl LinearGaussianModel {
    /// `a` is row-major `rows × cols` (observation × latent).
    pub fn new(a: &[f64], rows: usize, cols: usize, sigma: f64, y: &[f64]) -> Result<Self> {
        if a.len() != rows * cols {
            return Err(Error::Dimension {
                op: "LinearGaussianModel",
                axis: "matrix entries",
                expected: rows * cols,
                got: a.len(),
            });
        }
        if y.len() != rows {
            return Err(Error::Dimension {
                op: "LinearGaussianModel",
                axis: "observation",
                expected: rows,
                got: y.len(),
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(LinearGaussianModel {
            a: DMatrix::from_row_slice(rows, cols, a),
            sigma,
            y: DVector::from_column_slice(y),
        })
    }

    /// Posterior mean and covariance: `Λ = AᵀA/σ² + I`, `μ = Λ⁻¹Aᵀy/σ²`, `Σ = Λ⁻¹`.
    pub fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let s2 = self.sigma * self.sigma;
        let d = self.a.ncols();
        let precision = self.a.transpose() * &self.a / s2 + DMatrix::identity(d, d);
        let cov = precision
            .cholesky()
            .expect("AᵀA/σ² + I is positive definite")
            .inverse();
        let mean = &cov * (self.a.transpose() * &self.y) / s2;
        (mean, cov)
    }
}

impl LatentPosterior for LinearGaussianModel {
    fn latent_dim(&self) -> usize {
        self.a.ncols()
    }

    fn log_density_and_grad(&self, z: &Tensor) -> Result<(f64, Tensor)> {
        let zv = DVector::from_column_slice(z.data());
        let resid = &self.y - &self.a * &zv;
        let s2 = self.sigma * self.sigma;
        let value = -resid.norm_squared() / (2.0 * s2) - 0.5 * zv.norm_squared();
        let grad = self.a.transpose() * resid / s2 - zv;
        Ok((value, Tensor::vector(grad.as_slice())))
    }
}

/// Sample moments of a Langevin chain against the analytic Gaussian posterior.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub sample_mean: Vec<f64>,
    pub sample_var: Vec<f64>,
    pub analytic_mean: Vec<f64>,
    pub analytic_var: Vec<f64>,
    /// Batch-means standard error of each coordinate's sample mean.
    pub mean_std_err: Vec<f64>,
    /// `|sample − analytic| / std_err` per coordinate.
    pub mean_z_scores: Vec<f64>,
    /// `|sample_var − analytic_var| / analytic_var` per coordinate.
    pub var_rel_err: Vec<f64>,
    pub passed: bool,
}

pub const MOMENT_MEAN_SIGMAS: f64 = 4.0;
pub const MOMENT_VAR_REL_TOL: f64 = 0.25;
const BATCHES: usize = 50;

/// Runs one chain from the posterior mean's neighbourhood (zero), discards `burn_in`
/// steps and compares the next `n_samples` states with the closed form.
pub fn posterior_moment_check(
    model: &LinearGaussianModel,
    lcfg: &LangevinConfig,
    burn_in: usize,
    n_samples: usize,
) -> Result<MomentReport> {
    if n_samples < BATCHES * 2 {
        return Err(Error::Config(format!(
            "need at least {} samples",
            BATCHES * 2
        )));
    }
    let d = model.latent_dim();
    let cfg = LangevinConfig {
        steps: burn_in + n_samples,
        noise: true,
        ..lcfg.clone()
    };
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    langevin_run(model, &Tensor::zeros(&[d]), &cfg, |step, z, _| {
        if step >= burn_in {
            samples.push(z.data().to_vec());
        }
    })?;

    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n)
        .collect();
    let var: Vec<f64> = (0..d)
        .map(|i| {
            samples
                .iter()
                .map(|s| (s[i] - mean[i]).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        })
        .collect();

    let per_batch = samples.len() / BATCHES;
    let std_err: Vec<f64> = (0..d)
        .map(|i| {
            let means: Vec<f64> = samples
                .chunks_exact(per_batch)
                .take(BATCHES)
                .map(|c| c.iter().map(|s| s[i]).sum::<f64>() / per_batch as f64)
                .collect();
            let m = means.iter().sum::<f64>() / BATCHES as f64;
            let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (BATCHES as f64 - 1.0);
            (v / BATCHES as f64).sqrt()
        })
        .collect();

    let (amean, acov) = model.posterior();
    let analytic_mean: Vec<f64> = amean.iter().copied().collect();
    let analytic_var: Vec<f64> = (0..d).map(|i| acov[(i, i)]).collect();
    let mean_z_scores: Vec<f64> = (0..d)
        .map(|i| (mean[i] - analytic_mean[i]).abs() / std_err[i])
        .collect();
    let var_rel_err: Vec<f64> = (0..d)
        .map(|i| (var[i] - analytic_var[i]).abs() / analytic_var[i])
        .collect();
    let passed = mean_z_scores.iter().all(|&z| z <= MOMENT_MEAN_SIGMAS)
        && var_rel_err.iter().all(|&e| e <= MOMENT_VAR_REL_TOL);
    Ok(MomentReport {
        sample_mean: mean,
        sample_var: var,
        analytic_mean,
        analytic_var,
        mean_std_err: std_err,
        mean_z_scores,
        var_rel_err,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_model_posterior_is_half_identity() {
        let m = LinearGaussianModel::new(&[1.0, 0.0, 0.0, 1.0], 2, 2, 1.0, &[0.0, 0.0]).unwrap();
        let (mean, cov) = m.posterior();
        assert!(mean.norm() < 1e-15);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((cov[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(cov[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn symmetric_case_moments() {
        let m = LinearGaussianModel::new(&[1.0, 0.0, 0.0, 1.0], 2, 2, 1.0, &[0.0, 0.0]).unwrap();
        let cfg = LangevinConfig {
            delta: 0.3,
            seed: 17,
            step_halving: false,
            ..Default::default()
        };
        let r = posterior_moment_check(&m, &cfg, 500, 20_000).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn standard_error_shrinks_with_samples() {
        let m = LinearGaussianModel::new(&[2.0, 0.0, 0.0, 1.0], 2, 2, 0.5, &[1.0, 1.0]).unwrap();
        let cfg = LangevinConfig {
            delta: 0.2,
            seed: 3,
            step_halving: false,
            ..Default::default()
        };
        let a = posterior_moment_check(&m, &cfg, 500, 20_000).unwrap();
        let b = posterior_moment_check(&m, &cfg, 500, 40_000).unwrap();
        for i in 0..2 {
            let ratio = a.mean_std_err[i] / b.mean_std_err[i];
            assert!((1.1..1.8).contains(&ratio), "ratio {ratio}");
        }
    }
}
