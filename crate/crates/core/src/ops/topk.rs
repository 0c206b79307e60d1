use std::cmp::Ordering;

use crate::error::Result;
use crate::tensor::Tensor;

/// Output of [`topk`]: the kept values, the binary selection mask and how many were kept.
#[derive(Debug, Clone)]
pub struct TopKResult {
    pub values: Tensor,
    pub mask: Tensor,
    pub k_effective: usize,
    /// Flat indices of the kept elements, largest value first (ties: lower index first).
    pub indices: Vec<usize>,
}

/// Descending by value, ascending by flat index on ties.
fn rank_order(data: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| data[b].total_cmp(&data[a]).then(a.cmp(&b))
}

/// Keeps the `k` largest elements of the whole tensor (all axes jointly) and zeroes the rest.
///
/// `k` is clamped to `numel`. Ties are broken towards the lower row-major index.
pub fn topk(t: &Tensor, k: usize) -> TopKResult {
    let n = t.numel();
    let k_eff = k.min(n);
    let data = t.data();
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = rank_order(data);
    if k_eff > 0 && k_eff < n {
        order.select_nth_unstable_by(k_eff - 1, &cmp);
    }
    order.truncate(k_eff);
    order.sort_unstable_by(&cmp);

    let mut values = Tensor::zeros(t.shape());
    let mut mask = Tensor::zeros(t.shape());
    for &i in &order {
        values.data_mut()[i] = data[i];
        mask.data_mut()[i] = 1.0;
    }
    TopKResult {
        values,
        mask,
        k_effective: k_eff,
        indices: order,
    }
}

/// Straight-through gradient on the frozen selection mask.
pub fn topk_backward(mask: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.mul(mask)
}
