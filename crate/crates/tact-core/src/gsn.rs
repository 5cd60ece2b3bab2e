//! R-GCN encoding of enclosing subgraphs.
//!
//! Messages flow along typed edges with per-type weights and mean
//! normalisation, plus a self-loop term. Each original relation also gets
//! an inverse message type so information can travel from tails to heads;
//! the weight axis therefore covers `2|R|` types. Nodes with no incoming
//! messages keep only the self-loop term.

use std::collections::HashMap;

use crate::error::{Result, TactError};
use crate::subgraph::EnclosingSubgraph;
use crate::tensor::{Tape, Tensor, TensorId};

/// Weights of one message-passing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GsnLayer {
    /// One `d_in x d_out` matrix per message type (`2|R|` of them).
    pub rel_weights: Vec<Tensor>,
    /// Self-loop transform, `d_in x d_out`.
    pub self_weight: Tensor,
}

/// All message-passing layers. Layer 0 maps the `2d`-wide one-hot label
/// features down to `d`; deeper layers map `d -> d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GsnParams {
    pub layers: Vec<GsnLayer>,
}

impl GsnParams {
    pub fn init(
        num_rel_types: usize,
        dim: usize,
        num_layers: usize,
        rng: &mut impl rand::Rng,
    ) -> GsnParams {
        let bound = 1.0 / (dim as f64).sqrt();
        let layers = (0..num_layers)
            .map(|l| {
                let d_in = if l == 0 { 2 * dim } else { dim };
                GsnLayer {
                    rel_weights: (0..num_rel_types)
                        .map(|_| Tensor::uniform(d_in, dim, bound, rng).with_grad())
                        .collect(),
                    self_weight: Tensor::uniform(d_in, dim, bound, rng).with_grad(),
                }
            })
            .collect();
        GsnParams { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_rel_types(&self) -> usize {
        self.layers.first().map_or(0, |l| l.rel_weights.len())
    }
}

/// Tape handles for bound [`GsnParams`].
#[derive(Clone, Debug)]
pub struct GsnBinding {
    pub layers: Vec<GsnLayerBinding>,
}

#[derive(Clone, Debug)]
pub struct GsnLayerBinding {
    pub rel_weights: Vec<TensorId>,
    pub self_weight: TensorId,
}

impl GsnBinding {
    pub fn bind(params: &GsnParams, tape: &mut Tape) -> GsnBinding {
        GsnBinding {
            layers: params
                .layers
                .iter()
                .map(|l| GsnLayerBinding {
                    rel_weights: l.rel_weights.iter().map(|t| tape.leaf(t)).collect(),
                    self_weight: tape.leaf(&l.self_weight),
                })
                .collect(),
        }
    }
}

/// Incoming-message lists of a subgraph, grouped by destination node and
/// message type. Type `r` carries head -> tail messages of relation `r`;
/// type `r + |R|` carries the reverse direction.
#[derive(Clone, Debug)]
pub struct SubgraphAdjacency {
    pub n_nodes: usize,
    /// Per destination node: `(message type, sorted source nodes)`, with
    /// types ascending.
    pub incoming: Vec<Vec<(usize, Vec<usize>)>>,
}

impl SubgraphAdjacency {
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(usize, crate::kg::RelationId, usize)],
        num_relations: usize,
    ) -> SubgraphAdjacency {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &(h, r, t) in edges {
            map.entry((t, r.0)).or_default().push(h);
            map.entry((h, r.0 + num_relations)).or_default().push(t);
        }
        let mut incoming = vec![Vec::new(); n_nodes];
        for ((dst, ty), mut srcs) in map {
            srcs.sort_unstable();
            incoming[dst].push((ty, srcs));
        }
        for row in &mut incoming {
            row.sort_unstable_by_key(|(ty, _)| *ty);
        }
        SubgraphAdjacency { n_nodes, incoming }
    }

    pub fn build(sub: &EnclosingSubgraph, num_relations: usize) -> SubgraphAdjacency {
        SubgraphAdjacency::from_edges(sub.num_nodes(), &sub.edges, num_relations)
    }

    fn used_types(&self) -> Vec<usize> {
        let mut types: Vec<usize> = self
            .incoming
            .iter()
            .flat_map(|row| row.iter().map(|(ty, _)| *ty))
            .collect();
        types.sort_unstable();
        types.dedup();
        types
    }
}

/// One message-passing layer over the subgraph.
pub fn rgcn_layer(
    tape: &mut Tape,
    adj: &SubgraphAdjacency,
    features: TensorId,
    layer: &GsnLayerBinding,
) -> Result<TensorId> {
    let (rows, _) = tape.shape(features);
    if rows != adj.n_nodes {
        return Err(TactError::Shape {
            op: "rgcn_layer",
            left: tape.shape(features),
            right: (adj.n_nodes, tape.shape(features).1),
        });
    }
    // Project the whole feature matrix once per used message type.
    let self_proj = tape.matmul(features, layer.self_weight)?;
    let mut type_proj: HashMap<usize, TensorId> = HashMap::new();
    for ty in adj.used_types() {
        let w = *layer.rel_weights.get(ty).ok_or_else(|| {
            TactError::Contract(format!("message type {ty} has no weight matrix"))
        })?;
        type_proj.insert(ty, tape.matmul(features, w)?);
    }

    let mut out_rows = Vec::with_capacity(adj.n_nodes);
    for i in 0..adj.n_nodes {
        let mut acc = tape.index_row(self_proj, i)?;
        for (ty, srcs) in &adj.incoming[i] {
            let proj = type_proj[ty];
            let mut msg = tape.index_row(proj, srcs[0])?;
            for &j in &srcs[1..] {
                let row = tape.index_row(proj, j)?;
                msg = tape.add(msg, row)?;
            }
            let msg = tape.scale(msg, 1.0 / srcs.len() as f64)?;
            acc = tape.add(acc, msg)?;
        }
        out_rows.push(acc);
    }
    let stacked = tape.stack_rows(&out_rows)?;
    tape.relu(stacked)
}

/// Run all layers from the initial features and summarise the subgraph:
/// mean-pooled graph embedding plus the two target rows.
pub fn encode_subgraph(
    tape: &mut Tape,
    sub: &EnclosingSubgraph,
    binding: &GsnBinding,
    num_relations: usize,
    init_features: TensorId,
) -> Result<(TensorId, TensorId, TensorId)> {
    let adj = SubgraphAdjacency::build(sub, num_relations);
    let mut feats = init_features;
    for layer in &binding.layers {
        feats = rgcn_layer(tape, &adj, feats, layer)?;
    }
    let e_graph = tape.mean_rows(feats)?;
    let e_head = tape.index_row(feats, sub.target_u)?;
    let e_tail = tape.index_row(feats, sub.target_v)?;
    Ok((e_graph, e_head, e_tail))
}

/// `e_G (+) e_u (+) e_v`, the `1 x 3d` structural embedding.
pub fn structure_embedding(
    tape: &mut Tape,
    e_graph: TensorId,
    e_head: TensorId,
    e_tail: TensorId,
) -> Result<TensorId> {
    let gu = tape.concat_cols(e_graph, e_head)?;
    tape.concat_cols(gu, e_tail)
}
