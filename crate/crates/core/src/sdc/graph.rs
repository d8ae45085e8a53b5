use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{layer_size, ChainConfig};
use crate::decoherence::PointerBasis;
use crate::Result;

/// One system of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemNode {
    pub layer: usize,
    /// 1-based position within the layer.
    pub index: u64,
    /// 1-based group within the layer; group `k` decoheres node `k` of the
    /// next layer. The last layer forms a single group.
    pub group: u64,
    pub is_initiator: bool,
    /// Spatial tag `(index, layer, 0)`.
    pub position: [f64; 3],
    /// Global id of the system this node acts as environment for.
    pub has_dc_for: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub layer: usize,
    pub node_count: u64,
    pub group_size: u64,
    /// Global id of the layer's first node.
    pub first_node: usize,
    /// Basis of the interactions that take this layer as environment.
    pub pointer_basis: PointerBasis,
}

/// The chain as a layered DAG; edges point from environment to target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdcGraph {
    pub layers: Vec<LayerDescriptor>,
    pub nodes: Vec<SystemNode>,
    pub edges: Vec<(usize, usize)>,
}

impl SdcGraph {
    /// Global id of node `index` (1-based) in `layer`.
    pub fn node_id(&self, layer: usize, index: u64) -> usize {
        self.layers[layer].first_node + (index - 1) as usize
    }

    /// Global ids of the environment group acting on `target`.
    pub fn group_of(&self, target: usize) -> std::ops::Range<usize> {
        let node = &self.nodes[target];
        let below = &self.layers[node.layer - 1];
        let g = below.group_size as usize;
        let start = below.first_node + (node.index as usize - 1) * g;
        start..start + g
    }
}

/// Materialises every node and edge of a validated configuration.
pub fn build_graph(cfg: &ChainConfig) -> Result<SdcGraph> {
    cfg.validate()?;
    let n = cfg.last_layer();
    let g = cfg.group_size as u64;
    let mut layers = Vec::with_capacity(n + 1);
    let mut first = 0usize;
    for i in 0..=n {
        let count = layer_size(cfg, i)?;
        layers.push(LayerDescriptor {
            layer: i,
            node_count: count,
            group_size: if i == n { count } else { g },
            first_node: first,
            pointer_basis: PointerBasis::for_step(i),
        });
        first += count as usize;
    }
    let mut nodes = Vec::with_capacity(first);
    for d in &layers {
        for j in 1..=d.node_count {
            let group = (j - 1) / d.group_size + 1;
            let has_dc_for = if d.layer < n {
                Some(layers[d.layer + 1].first_node + (group - 1) as usize)
            } else {
                None
            };
            nodes.push(SystemNode {
                layer: d.layer,
                index: j,
                group,
                is_initiator: d.layer == 0,
                position: [j as f64, d.layer as f64, 0.0],
                has_dc_for,
            });
        }
    }
    let edges = nodes
        .iter()
        .enumerate()
        .filter_map(|(id, node)| node.has_dc_for.map(|t| (id, t)))
        .collect();
    Ok(SdcGraph { layers, nodes, edges })
}

/// A broken chain condition, tagged by the rule it violates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum CdcViolation {
    /// CDC1: an edge that does not go from layer `i` to layer `i + 1`.
    NonAdjacentEdge { from: usize, to: usize },
    /// CDC3: a layer-0 node without the initiator flag.
    MissingInitiatorFlag { node: usize },
    /// CDC3: an initiator flag outside layer 0.
    InitiatorOutsideFirstLayer { node: usize },
    /// CDC4: a non-initiator whose parents are not exactly one complete group.
    IncompleteGroup { node: usize, parents: usize, expected: u64 },
    /// A layer's pointer basis disagrees with the z/x alternation.
    BasisParity { layer: usize },
}

impl CdcViolation {
    pub fn rule(&self) -> &'static str {
        match self {
            CdcViolation::NonAdjacentEdge { .. } => "CDC1",
            CdcViolation::MissingInitiatorFlag { .. } | CdcViolation::InitiatorOutsideFirstLayer { .. } => "CDC3",
            CdcViolation::IncompleteGroup { .. } => "CDC4",
            CdcViolation::BasisParity { .. } => "basis",
        }
    }
}

/// Checks the structural chain conditions; an empty result means the graph
/// is a well-formed chain.
pub fn validate_cdc(graph: &SdcGraph) -> Vec<CdcViolation> {
    let mut out = Vec::new();
    for d in &graph.layers {
        if d.pointer_basis != PointerBasis::for_step(d.layer) {
            out.push(CdcViolation::BasisParity { layer: d.layer });
        }
    }
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for &(from, to) in &graph.edges {
        let (Some(a), Some(b)) = (graph.nodes.get(from), graph.nodes.get(to)) else {
            out.push(CdcViolation::NonAdjacentEdge { from, to });
            continue;
        };
        if b.layer != a.layer + 1 {
            out.push(CdcViolation::NonAdjacentEdge { from, to });
        }
        parents[to].push(from);
    }
    let mut group_members: HashMap<(usize, u64), u64> = HashMap::new();
    for node in &graph.nodes {
        *group_members.entry((node.layer, node.group)).or_default() += 1;
    }
    for (id, node) in graph.nodes.iter().enumerate() {
        match (node.layer == 0, node.is_initiator) {
            (true, false) => out.push(CdcViolation::MissingInitiatorFlag { node: id }),
            (false, true) => out.push(CdcViolation::InitiatorOutsideFirstLayer { node: id }),
            _ => {}
        }
        if node.layer == 0 {
            continue;
        }
        let expected = graph.layers.get(node.layer - 1).map_or(0, |d| d.group_size);
        let ps = &parents[id];
        let complete = ps.len() as u64 == expected && {
            let first = &graph.nodes[ps[0]];
            group_members[&(first.layer, first.group)] == expected
                && ps.iter().all(|&p| {
                    let m = &graph.nodes[p];
                    m.layer + 1 == node.layer && m.group == first.group
                })
                && {
                    let mut sorted = ps.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    sorted.len() == ps.len()
                }
        };
        if !complete {
            out.push(CdcViolation::IncompleteGroup {
                node: id,
                parents: ps.len(),
                expected,
            });
        }
    }
    out
}
