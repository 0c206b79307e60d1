//! Sparse coding and AND-OR parse graphs induced from a recorded forward pass.
//!
//! With the Top-K and ReLU masks of a trace frozen, the generator is affine in every
//! feature map. Each surviving activation `sⱼ` of feature map `i` then owns
//!
//! * a next-layer basis `Hⱼ` with `Σⱼ sⱼ·Hⱼ = fmⁱ⁺¹`, and
//! * an image-space synthesis basis `Bⱼ` with `tanh(Σⱼ sⱼ·Bⱼ) = Y`.
//!
//! Biases are split evenly over the `k_eff` surviving activations of the decomposition
//! layer, including the biases of every downstream layer, which makes both identities
//! exact.

mod export;

pub use export::{atlas_sidecar_json, export_parse_graph, import_parse_graph};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::generator::{ForwardTrace, Generator};
use crate::ops::{deconv2d_with_bias_weight, tanh_map};
use crate::tensor::Tensor;

/// A surviving activation of one feature map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    /// Row-major offset within the feature map.
    pub offset: usize,
    pub coeff: f64,
}

/// Surviving (strictly positive) activations of feature map `layer`, ordered by
/// descending coefficient with ties broken by row-major position. Position in the
/// returned list is the activation index `j`.
pub fn surviving(trace: &ForwardTrace, layer: usize) -> Result<Vec<Activation>> {
    let lt = trace.layers.get(layer).ok_or_else(|| {
        Error::Index(format!(
            "feature map {layer} (trace has {})",
            trace.layers.len()
        ))
    })?;
    let s = lt.sparse.shape();
    let (h, c) = (s[1], s[2]);
    let mut acts: Vec<Activation> = lt
        .sparse
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(offset, &coeff)| Activation {
            x: offset / (h * c),
            y: (offset / c) % h,
            channel: offset % c,
            offset,
            coeff,
        })
        .collect();
    acts.sort_by(|a, b| b.coeff.total_cmp(&a.coeff).then(a.offset.cmp(&b.offset)));
    Ok(acts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrNode {
    pub channel: usize,
    pub coeff: f64,
    /// Index of this activation in the layer's surviving set.
    pub j: usize,
}

/// A spatial location with at least one surviving activation.
#[derive(Debug, Clone, PartialEq)]
pub struct AndNode {
    pub x: usize,
    pub y: usize,
    pub or_nodes: Vec<OrNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    /// 1-based feature-map number (the FC output is layer 1).
    pub layer: usize,
    pub k_total: usize,
    pub and_nodes: Vec<AndNode>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseGraph {
    pub layers: Vec<LayerGraph>,
}

impl ParseGraph {
    pub fn layer(&self, layer: usize) -> Option<&LayerGraph> {
        self.layers.iter().find(|l| l.layer == layer)
    }
}

/// Groups activations by location; AND nodes in row-major order, OR nodes by channel.
pub(crate) fn group_layer(layer: usize, acts: &[Activation]) -> LayerGraph {
    let mut by_loc: BTreeMap<(usize, usize), Vec<OrNode>> = BTreeMap::new();
    for (j, a) in acts.iter().enumerate() {
        by_loc.entry((a.x, a.y)).or_default().push(OrNode {
            channel: a.channel,
            coeff: a.coeff,
            j,
        });
    }
    let and_nodes = by_loc
        .into_iter()
        .map(|((x, y), mut or_nodes)| {
            or_nodes.sort_by_key(|o| o.channel);
            AndNode { x, y, or_nodes }
        })
        .collect();
    LayerGraph {
        layer,
        k_total: acts.len(),
        and_nodes,
    }
}

pub fn parse_graph(trace: &ForwardTrace) -> Result<ParseGraph> {
    let mut layers = Vec::with_capacity(trace.layers.len());
    for (i, lt) in trace.layers.iter().enumerate() {
        let acts = surviving(trace, i)?;
        let masked = lt.active_mask().sum() as usize;
        if masked != acts.len() {
            return Err(Error::Index(format!(
                "feature map {i}: {} positive activations but {masked} mask bits",
                acts.len()
            )));
        }
        layers.push(group_layer(i + 1, &acts));
    }
    Ok(ParseGraph { layers })
}

fn activation(
    trace: &ForwardTrace,
    layer: usize,
    j: usize,
) -> Result<(Vec<Activation>, Activation)> {
    let acts = surviving(trace, layer)?;
    let a = *acts.get(j).ok_or_else(|| {
        Error::Index(format!(
            "activation {j} of feature map {layer} ({} survive)",
            acts.len()
        ))
    })?;
    Ok((acts, a))
}

/// `fm_{s_j}`: the feature map with only activation `j` kept.
pub fn single_activation_map(trace: &ForwardTrace, layer: usize, j: usize) -> Result<Tensor> {
    let (_, a) = activation(trace, layer, j)?;
    let mut t = Tensor::zeros(trace.layers[layer].sparse.shape());
    t.data_mut()[a.offset] = a.coeff;
    Ok(t)
}

/// Coefficient `sⱼ` and next-layer basis `Hⱼ = (fm_{s_j} ⊗ ker + bias/k_eff) / sⱼ`.
///
/// For the last feature map the "next layer" is the pre-tanh image.
pub fn basis_h(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
    j: usize,
) -> Result<(f64, Tensor)> {
    let (acts, a) = activation(trace, layer, j)?;
    let single = single_activation_map(trace, layer, j)?;
    let spec = &generator.config.layers[layer];
    let p = &generator.params.layers[layer];
    let next = deconv2d_with_bias_weight(
        &single,
        &p.kernel,
        &p.bias,
        spec.stride,
        spec.pad,
        1.0 / acts.len() as f64,
    )?;
    Ok((a.coeff, next.scale(1.0 / a.coeff)))
}

/// Coefficient `sⱼ` and image-space synthesis basis `Bⱼ`: activation `j` propagated to
/// the pre-tanh image through frozen masks, carrying a `1/k_eff` share of every bias,
/// divided by `sⱼ`.
pub fn synthesis_basis(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
    j: usize,
) -> Result<(f64, Tensor)> {
    let (acts, a) = activation(trace, layer, j)?;
    let single = single_activation_map(trace, layer, j)?;
    let pre = generator.propagate_frozen(trace, layer, &single, 1.0 / acts.len() as f64)?;
    Ok((a.coeff, pre.scale(1.0 / a.coeff)))
}

/// Image positions reached by activation `j` (bias shares excluded).
pub fn basis_support(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
    j: usize,
) -> Result<Vec<bool>> {
    let single = single_activation_map(trace, layer, j)?;
    let pre = generator.propagate_frozen(trace, layer, &single, 0.0)?;
    Ok(pre.data().iter().map(|&v| v != 0.0).collect())
}

#[derive(Debug, Clone)]
pub struct BasisEntry {
    pub j: usize,
    pub x: usize,
    pub y: usize,
    pub channel: usize,
    pub coeff: f64,
    pub h: Tensor,
    pub b: Tensor,
}

/// All bases of one feature map, in activation order.
#[derive(Debug, Clone)]
pub struct BasisAtlas {
    /// 1-based feature-map number.
    pub layer: usize,
    pub entries: Vec<BasisEntry>,
}

pub fn basis_atlas(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
) -> Result<BasisAtlas> {
    let acts = surviving(trace, layer)?;
    let entries = acts
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let (_, h) = basis_h(generator, trace, layer, j)?;
            let (_, b) = synthesis_basis(generator, trace, layer, j)?;
            Ok(BasisEntry {
                j,
                x: a.x,
                y: a.y,
                channel: a.channel,
                coeff: a.coeff,
                h,
                b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisAtlas {
        layer: layer + 1,
        entries,
    })
}

/// `tanh(Σⱼ sⱼ·Bⱼ)` over the surviving activations of `layer`. A layer with no survivors
/// reduces to the bias-only propagation.
pub fn reconstruct_from_layer(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
) -> Result<Tensor> {
    let k = surviving(trace, layer)?.len();
    if k == 0 {
        let zero = Tensor::zeros(trace.layers[layer].sparse.shape());
        return Ok(tanh_map(
            &generator.propagate_frozen(trace, layer, &zero, 1.0)?,
        ));
    }
    let mut acc = Tensor::zeros(trace.preimage.shape());
    for j in 0..k {
        let (s, b) = synthesis_basis(generator, trace, layer, j)?;
        acc.add_scaled(&b, s)?;
    }
    Ok(tanh_map(&acc))
}

/// Reconstruction from `layer` with the coefficients in `drop` set to zero. Bias shares
/// are kept, so dropping everything leaves the bias-only image.
pub fn ablate(
    generator: &Generator,
    trace: &ForwardTrace,
    layer: usize,
    drop: &[usize],
) -> Result<Tensor> {
    let acts = surviving(trace, layer)?;
    let mut fm = trace.layers[layer].sparse.clone();
    for &j in drop {
        let a = acts.get(j).ok_or_else(|| {
            Error::Index(format!(
                "activation {j} of feature map {layer} ({} survive)",
                acts.len()
            ))
        })?;
        fm.data_mut()[a.offset] = 0.0;
    }
    Ok(tanh_map(
        &generator.propagate_frozen(trace, layer, &fm, 1.0)?,
    ))
}
