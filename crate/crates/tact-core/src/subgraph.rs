//! Enclosing-subgraph extraction and double-radius node labeling.
//!
//! The subgraph around a candidate pair `(u, v)` is the intersection of
//! their undirected k-hop neighbourhoods plus the pair itself, induced on
//! the graph without the scored edge, then pruned once so every kept node
//! stays within `k` hops of both targets inside the subgraph.

use std::io::Write;

use crate::error::{Result, TactError};
use crate::kg::{EdgeId, EntityId, KnowledgeGraph, RelationId};
use crate::tensor::Tensor;

/// Extracted subgraph in local node indices. Node 0 is the head target `u`
/// and node 1 is the tail target `v`; the remaining nodes are sorted by
/// original entity id. The scored target edge is never among `edges`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnclosingSubgraph {
    /// Original entity ids, indexed by local node id.
    pub nodes: Vec<EntityId>,
    /// Local `(head, relation, tail)` edges.
    pub edges: Vec<(usize, RelationId, usize)>,
    pub target_u: usize,
    pub target_v: usize,
    /// Per-node `(d(i,u), d(i,v))`, filled by [`label_nodes`].
    pub labels: Vec<(usize, usize)>,
}

impl EnclosingSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Fill `labels` with distances capped at `cap`.
    pub fn labeled(mut self, cap: usize) -> EnclosingSubgraph {
        self.labels = label_nodes(&self, cap);
        self
    }
}

/// Entities within `k` undirected hops of `node`, including the seed.
pub fn k_hop_neighbors(kg: &KnowledgeGraph, node: EntityId, k: usize) -> Result<Vec<EntityId>> {
    if k == 0 {
        return Err(TactError::Contract("k_hop_neighbors requires k >= 1".into()));
    }
    if node.0 >= kg.num_entities() {
        return Err(TactError::Index(format!(
            "entity {} out of range (|E| = {})",
            node.0,
            kg.num_entities()
        )));
    }
    let mut seen = vec![false; kg.num_entities()];
    seen[node.0] = true;
    let mut frontier = vec![node];
    let mut out = vec![node];
    for _ in 0..k {
        let mut next = Vec::new();
        for &n in &frontier {
            for e in kg.edges_by_head(n).iter().chain(kg.edges_by_tail(n)) {
                let t = kg.triple(*e).unwrap();
                for other in [t.head, t.tail] {
                    if !seen[other.0] {
                        seen[other.0] = true;
                        next.push(other);
                        out.push(other);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out.sort_unstable();
    Ok(out)
}

/// Undirected BFS distances over local edges, optionally skipping one node.
/// Unreachable nodes stay at `usize::MAX`.
fn local_distances(
    n_nodes: usize,
    edges: &[(usize, RelationId, usize)],
    start: usize,
    skip: Option<usize>,
) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n_nodes];
    for &(h, _, t) in edges {
        adj[h].push(t);
        adj[t].push(h);
    }
    let mut dist = vec![usize::MAX; n_nodes];
    if Some(start) == skip {
        return dist;
    }
    dist[start] = 0;
    let mut frontier = vec![start];
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &n in &frontier {
            for &m in &adj[n] {
                if Some(m) != skip && dist[m] == usize::MAX {
                    dist[m] = d;
                    next.push(m);
                }
            }
        }
        frontier = next;
    }
    dist
}

/// Extract the enclosing subgraph around `(u, v)`.
///
/// `exclude_edge` identifies the scored triple's edge id when that triple is
/// present in the graph; it is dropped before pruning so the positive class
/// stays non-trivial.
pub fn extract_enclosing_subgraph(
    kg: &KnowledgeGraph,
    u: EntityId,
    v: EntityId,
    k: usize,
    exclude_edge: Option<EdgeId>,
) -> Result<EnclosingSubgraph> {
    if u == v {
        return Err(TactError::Contract(
            "enclosing subgraph requires distinct target nodes".into(),
        ));
    }
    let nu = k_hop_neighbors(kg, u, k)?;
    let nv = k_hop_neighbors(kg, v, k)?;

    let mut in_nu = vec![false; kg.num_entities()];
    for n in &nu {
        in_nu[n.0] = true;
    }
    let mut keep = vec![false; kg.num_entities()];
    for n in &nv {
        if in_nu[n.0] {
            keep[n.0] = true;
        }
    }
    keep[u.0] = true;
    keep[v.0] = true;

    // Local ordering: u, v, then remaining candidates by entity id.
    let mut nodes = vec![u, v];
    for id in 0..kg.num_entities() {
        if keep[id] && id != u.0 && id != v.0 {
            nodes.push(EntityId(id));
        }
    }
    let mut local = vec![usize::MAX; kg.num_entities()];
    for (i, n) in nodes.iter().enumerate() {
        local[n.0] = i;
    }

    let induce = |nodes: &[EntityId], local: &[usize]| -> Vec<(usize, RelationId, usize)> {
        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for n in nodes {
            for &e in kg.edges_by_head(*n) {
                if Some(e) == exclude_edge || !seen.insert(e) {
                    continue;
                }
                let t = kg.triple(e).unwrap();
                let (lh, lt) = (local[t.head.0], local[t.tail.0]);
                if lh != usize::MAX && lt != usize::MAX {
                    edges.push((lh, t.rel, lt));
                }
            }
            for &e in kg.edges_by_tail(*n) {
                if Some(e) == exclude_edge || !seen.insert(e) {
                    continue;
                }
                let t = kg.triple(e).unwrap();
                let (lh, lt) = (local[t.head.0], local[t.tail.0]);
                if lh != usize::MAX && lt != usize::MAX {
                    edges.push((lh, t.rel, lt));
                }
            }
        }
        edges.sort_unstable_by_key(|&(h, r, t)| (h, r.0, t));
        edges
    };

    let edges = induce(&nodes, &local);

    // One pruning pass: distances to both targets inside the induced
    // subgraph must stay within k.
    let du = local_distances(nodes.len(), &edges, 0, None);
    let dv = local_distances(nodes.len(), &edges, 1, None);
    let kept: Vec<EntityId> = nodes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i < 2 || (du[i] <= k && dv[i] <= k))
        .map(|(_, n)| *n)
        .collect();

    let mut local = vec![usize::MAX; kg.num_entities()];
    for (i, n) in kept.iter().enumerate() {
        local[n.0] = i;
    }
    let edges = induce(&kept, &local);

    Ok(EnclosingSubgraph {
        nodes: kept,
        edges,
        target_u: 0,
        target_v: 1,
        labels: Vec::new(),
    })
}

/// Double-radius labels: `d(i,u)` is the shortest distance to `u` with `v`
/// deleted from the subgraph (and symmetrically for `d(i,v)`). Targets are
/// forced to `(0,1)` and `(1,0)`; unreachable or over-cap distances clamp
/// to `cap`.
pub fn label_nodes(sub: &EnclosingSubgraph, cap: usize) -> Vec<(usize, usize)> {
    let n = sub.num_nodes();
    let du = local_distances(n, &sub.edges, sub.target_u, Some(sub.target_v));
    let dv = local_distances(n, &sub.edges, sub.target_v, Some(sub.target_u));
    let clamp = |d: usize| d.min(cap);
    (0..n)
        .map(|i| {
            if i == sub.target_u {
                (0, 1)
            } else if i == sub.target_v {
                (1, 0)
            } else {
                (clamp(du[i]), clamp(dv[i]))
            }
        })
        .collect()
}

/// One-hot `d(i,u)` concatenated with one-hot `d(i,v)`, each block of width
/// `dim`; every row has exactly two ones.
pub fn init_node_features(labels: &[(usize, usize)], dim: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * 2 * dim];
    for (i, &(du, dv)) in labels.iter().enumerate() {
        if du >= dim || dv >= dim {
            return Err(TactError::Contract(format!(
                "node label ({du},{dv}) exceeds one-hot width {dim}"
            )));
        }
        data[i * 2 * dim + du] = 1.0;
        data[i * 2 * dim + dim + dv] = 1.0;
    }
    Tensor::from_vec(labels.len(), 2 * dim, data)
}

/// Debug dump: local edges then per-node labels, as TSV.
pub fn dump_subgraph(sub: &EnclosingSubgraph, kg: &KnowledgeGraph, mut out: impl Write) -> Result<()> {
    let io = |e| TactError::io("<subgraph dump>", e);
    writeln!(out, "# nodes\t{}", sub.num_nodes()).map_err(io)?;
    for (i, n) in sub.nodes.iter().enumerate() {
        let (du, dv) = sub.labels.get(i).copied().unwrap_or((0, 0));
        writeln!(
            out,
            "node\t{}\t{}\t{}\t{}",
            i,
            kg.entity_vocab().name(n.0).unwrap_or("?"),
            du,
            dv
        )
        .map_err(io)?;
    }
    for &(h, r, t) in &sub.edges {
        writeln!(
            out,
            "edge\t{}\t{}\t{}",
            h,
            kg.relation_vocab().name(r.0).unwrap_or("?"),
            t
        )
        .map_err(io)?;
    }
    Ok(())
}
