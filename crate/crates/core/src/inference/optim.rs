use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Gradient *ascent* on a list of tensors. Adam moments are allocated on first use.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: Vec<&Tensor>, lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Dimension {
                op: "optimizer",
                axis: "tensor count",
                expected: params.len(),
                got: grads.len(),
            });
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.add_scaled(g, lr)?;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.is_empty() {
                    self.first_moment = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
                    self.second_moment = self.first_moment.clone();
                }
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    p.expect_same_shape(g, "adam")?;
                    m.expect_same_shape(g, "adam")?;
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut()));
                    for ((pv, &gv), (mv, vv)) in it {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        *pv += lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_ascends() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd);
        let mut p = Tensor::vector(&[1.0, 2.0]);
        let g = Tensor::vector(&[0.5, -1.0]);
        opt.step(vec![&mut p], vec![&g], 0.1).unwrap();
        assert_eq!(p.data(), &[1.05, 1.9]);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut opt = Optimizer::new(OptimizerKind::default());
        let mut p = Tensor::vector(&[0.0, 0.0]);
        let g = Tensor::vector(&[3.0, -0.01]);
        opt.step(vec![&mut p], vec![&g], 1e-3).unwrap();
        assert!((p.data()[0] - 1e-3).abs() < 1e-9);
        assert!((p.data()[1] + 1e-3).abs() < 1e-6);
    }

    #[test]
    fn serde_shape() {
        let s = serde_json::to_string(&OptimizerKind::Sgd).unwrap();
        assert_eq!(s, r#"{"kind":"sgd"}"#);
        let a: OptimizerKind =
            serde_json::from_str(r#"{"kind":"adam","beta1":0.5,"beta2":0.9,"eps":1e-6}"#).unwrap();
        assert_eq!(
            a,
            OptimizerKind::Adam {
                beta1: 0.5,
                beta2: 0.9,
                eps: 1e-6
            }
        );
    }
}
