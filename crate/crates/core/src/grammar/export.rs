//! Canonical JSON for parse graphs: compact, keys sorted, shortest round-trip floats.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AndNode, BasisAtlas, LayerGraph, OrNode, ParseGraph};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrJson {
    channel: usize,
    coeff: f64,
    j: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AndJson {
    or_nodes: Vec<OrJson>,
    x: usize,
    y: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerJson {
    and_nodes: Vec<AndJson>,
    k_total: usize,
    layer: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    layers: Vec<LayerJson>,
}

pub fn export_parse_graph(pg: &ParseGraph) -> Result<String> {
    let doc = GraphJson {
        layers: pg
            .layers
            .iter()
            .map(|l| LayerJson {
                and_nodes: l
                    .and_nodes
                    .iter()
                    .map(|a| AndJson {
                        or_nodes: a
                            .or_nodes
                            .iter()
                            .map(|o| OrJson {
                                channel: o.channel,
                                coeff: o.coeff,
                                j: o.j,
                            })
                            .collect(),
                        x: a.x,
                        y: a.y,
                    })
                    .collect(),
                k_total: l.k_total,
                layer: l.layer,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Parses and validates a parse graph document.
pub fn import_parse_graph(text: &str) -> Result<ParseGraph> {
    let doc: GraphJson = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut seen_layers = BTreeSet::new();
    let mut layers = Vec::with_capacity(doc.layers.len());
    for l in doc.layers {
        if l.layer == 0 || !seen_layers.insert(l.layer) {
            return Err(Error::Schema(format!(
                "layer number {} is zero or repeated",
                l.layer
            )));
        }
        let mut js = BTreeSet::new();
        let mut locs = BTreeSet::new();
        let mut and_nodes = Vec::with_capacity(l.and_nodes.len());
        for a in l.and_nodes {
            if a.or_nodes.is_empty() {
                return Err(Error::Schema(format!(
                    "layer {}: AND node ({}, {}) has no OR nodes",
                    l.layer, a.x, a.y
                )));
            }
            if !locs.insert((a.x, a.y)) {
                return Err(Error::Schema(format!(
                    "layer {}: location ({}, {}) repeated",
                    l.layer, a.x, a.y
                )));
            }
            let mut channels = BTreeSet::new();
            let mut or_nodes = Vec::with_capacity(a.or_nodes.len());
            for o in a.or_nodes {
                if !(o.coeff.is_finite() && o.coeff > 0.0) {
                    return Err(Error::Schema(format!(
                        "layer {}: coefficient {} is not positive",
                        l.layer, o.coeff
                    )));
                }
                if !channels.insert(o.channel) || !js.insert(o.j) {
                    return Err(Error::Schema(format!(
                        "layer {}: channel {} or index {} repeated",
                        l.layer, o.channel, o.j
                    )));
                }
                or_nodes.push(OrNode {
                    channel: o.channel,
                    coeff: o.coeff,
                    j: o.j,
                });
            }
            and_nodes.push(AndNode {
                x: a.x,
                y: a.y,
                or_nodes,
            });
        }
        if js.len() != l.k_total || js.last().is_some_and(|&j| j + 1 != l.k_total) {
            return Err(Error::Schema(format!(
                "layer {}: k_total {} does not match {} OR nodes indexed 0..k",
                l.layer,
                l.k_total,
                js.len()
            )));
        }
        layers.push(LayerGraph {
            layer: l.layer,
            k_total: l.k_total,
            and_nodes,
        });
    }
    Ok(ParseGraph { layers })
}

#[derive(Serialize)]
struct CellJson {
    cell: usize,
    channel: usize,
    coeff: f64,
    j: usize,
    x: usize,
    y: usize,
}

#[derive(Serialize)]
struct AtlasJson {
    cells: Vec<CellJson>,
    layer: usize,
}

/// Maps grid cells of a rendered basis atlas back to their activations.
pub fn atlas_sidecar_json(atlas: &BasisAtlas) -> Result<String> {
    let doc = AtlasJson {
        cells: atlas
            .entries
            .iter()
            .enumerate()
            .map(|(cell, e)| CellJson {
                cell,
                channel: e.channel,
                coeff: e.coeff,
                j: e.j,
                x: e.x,
                y: e.y,
            })
            .collect(),
        layer: atlas.layer,
    };
    Ok(serde_json::to_string(&doc)?)
}
