//! Central finite-difference checker for analytic gradients.
//!
//! Piecewise-linear pieces (Top-K, ReLU) make a function non-smooth on mask boundaries.
//! Callers report the active masks alongside the value; a coordinate is only compared
//! when the masks at `x − h`, `x` and `x + h` agree.

use crate::error::Result;
use crate::tensor::Tensor;

/// A scalar function with an analytic gradient.
pub trait Differentiable {
    /// Function value and a signature of every active mask (empty for smooth functions).
    fn value(&self, x: &Tensor) -> Result<(f64, Vec<bool>)>;

    fn gradient(&self, x: &Tensor) -> Result<Tensor>;
}

/// Adapter for a smooth function given as two closures.
pub struct Smooth<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Differentiable for Smooth<V, G>
where
    V: Fn(&Tensor) -> f64,
    G: Fn(&Tensor) -> Tensor,
{
    fn value(&self, x: &Tensor) -> Result<(f64, Vec<bool>)> {
        Ok(((self.value)(x), Vec::new()))
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok((self.gradient)(x))
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates to check; all of them when `None`.
    pub coords: Option<Vec<usize>>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            coords: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckOutcome {
    Pass,
    Fail,
    /// Every requested coordinate straddled a mask change.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|analytic − fd| / max(1, |analytic|)`.
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    pub checked: usize,
    pub skipped: Vec<usize>,
}

impl GradCheckReport {
    pub fn outcome(&self, tolerance: f64) -> GradCheckOutcome {
        if self.checked == 0 {
            GradCheckOutcome::Inconclusive
        } else if self.max_rel_error < tolerance {
            GradCheckOutcome::Pass
        } else {
            GradCheckOutcome::Fail
        }
    }

    pub fn stable_fraction(&self) -> f64 {
        let total = self.checked + self.skipped.len();
        if total == 0 {
            0.0
        } else {
            self.checked as f64 / total as f64
        }
    }
}

pub fn grad_check<F: Differentiable + ?Sized>(
    f: &F,
    x: &Tensor,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, base_masks) = f.value(x)?;
    let analytic = f.gradient(x)?;
    x.expect_same_shape(&analytic, "grad_check")?;

    let coords: Vec<usize> = match &opts.coords {
        Some(c) => c.clone(),
        None => (0..x.numel()).collect(),
    };
    let h = opts.step;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coord: None,
        checked: 0,
        skipped: Vec::new(),
    };
    let mut probe = x.clone();
    for &i in &coords {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let (fp, mp) = f.value(&probe)?;
        probe.data_mut()[i] = orig - h;
        let (fm, mm) = f.value(&probe)?;
        probe.data_mut()[i] = orig;
        if mp != base_masks || mm != base_masks {
            report.skipped.push(i);
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - fd).abs() / a.abs().max(1.0);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_coord.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_coord = Some(i);
        }
    }
    Ok(report)
}
