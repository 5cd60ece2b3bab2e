//! Relational correlation network: attention over pattern neighbourhoods
//! and the fused relation embedding.
//!
//! For a target relation `t` and connected pattern `p`, neighbour relations
//! are scored with a per-pattern bilinear form and normalised by a masked
//! softmax, giving coefficients that are non-negative and sum to one over
//! the pattern's support. The six pattern aggregates are averaged and fused
//! with the raw relation embedding.

use std::collections::HashMap;

use crate::error::{Result, TactError};
use crate::kg::{EdgeId, EntityId, KnowledgeGraph, RelationId};
use crate::rcg::{classify_pattern, Pattern, RelationalCorrelationGraph, CONNECTED_PATTERNS};
use crate::tensor::{Tape, Tensor, TensorId};

/// Learnable parameters of the relational correlation module.
#[derive(Clone, Debug, PartialEq)]
pub struct RcnParams {
    /// `|R| x d` relation embeddings.
    pub relation_emb: Tensor,
    /// Six `d x d` per-pattern transforms.
    pub pattern_transforms: [Tensor; CONNECTED_PATTERNS],
    /// Six `d x 1` per-pattern attention vectors.
    pub attention: [Tensor; CONNECTED_PATTERNS],
    /// `2d x d` fusion matrix applied to `[r_t (+) r_t^N]`.
    pub fusion: Tensor,
}

impl RcnParams {
    pub fn init(num_relations: usize, dim: usize, rng: &mut impl rand::Rng) -> RcnParams {
        let bound = 1.0 / (dim as f64).sqrt();
        RcnParams {
            relation_emb: Tensor::uniform(num_relations, dim, bound, rng).with_grad(),
            pattern_transforms: std::array::from_fn(|_| {
                Tensor::uniform(dim, dim, bound, rng).with_grad()
            }),
            attention: std::array::from_fn(|_| Tensor::uniform(dim, 1, bound, rng).with_grad()),
            fusion: Tensor::uniform(2 * dim, dim, bound, rng).with_grad(),
        }
    }

    pub fn dim(&self) -> usize {
        self.relation_emb.cols()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_emb.rows()
    }
}

/// Tape handles for bound [`RcnParams`].
#[derive(Clone, Copy, Debug)]
pub struct RcnBinding {
    pub relation_emb: TensorId,
    pub pattern_transforms: [TensorId; CONNECTED_PATTERNS],
    pub attention: [TensorId; CONNECTED_PATTERNS],
    pub fusion: TensorId,
}

impl RcnBinding {
    pub fn bind(params: &RcnParams, tape: &mut Tape) -> RcnBinding {
        RcnBinding {
            relation_emb: tape.leaf(&params.relation_emb),
            pattern_transforms: params.pattern_transforms.each_ref().map(|t| tape.leaf(t)),
            attention: params.attention.each_ref().map(|t| tape.leaf(t)),
            fusion: tape.leaf(&params.fusion),
        }
    }
}

/// Which relational correlation computation to run.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum RcnVariant {
    /// Attention-weighted pattern aggregation plus fusion.
    Full,
    /// Skip aggregation entirely: the output is the raw embedding.
    NoAggregation,
    /// Unweighted mean over all pattern neighbours, then fusion.
    NoCorrelation,
}

/// Instance-level relational context of a candidate pair: for each
/// connected pattern, the relations carried by fact-graph edges incident to
/// the pair's endpoints, classified against the candidate edge `(u, v)`.
///
/// This is what scoring consumes. The graph-level
/// [`RelationalCorrelationGraph`] aggregates these sets over all edges of a
/// relation; using the per-pair sets keeps the final relation embedding
/// sensitive to the query, which relation ranking needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairContext {
    sets: [Vec<usize>; CONNECTED_PATTERNS],
}

impl PairContext {
    pub fn from_sets(sets: [Vec<usize>; CONNECTED_PATTERNS]) -> PairContext {
        let mut sets = sets;
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        PairContext { sets }
    }

    /// Classify every irreflexive edge touching `u` or `v` against the
    /// candidate edge `(u, v)`. `exclude` drops the scored triple's own
    /// edge so the context matches what is observable at query time.
    pub fn from_graph(
        kg: &KnowledgeGraph,
        u: EntityId,
        v: EntityId,
        exclude: Option<EdgeId>,
    ) -> Result<PairContext> {
        if u == v {
            return Err(TactError::Contract(
                "pair context requires distinct endpoints".into(),
            ));
        }
        let mut sets: [std::collections::BTreeSet<usize>; CONNECTED_PATTERNS] =
            Default::default();
        let mut edges = kg.incident_edges(u)?;
        edges.extend(kg.incident_edges(v)?);
        edges.sort_unstable();
        edges.dedup();
        for e in edges {
            if Some(e) == exclude {
                continue;
            }
            let t = kg.triple(e).unwrap();
            if t.is_reflexive() {
                continue;
            }
            let p = classify_pattern((t.head, t.tail), (u, v))?;
            if let Some(idx) = p.index() {
                sets[idx].insert(t.rel.0);
            }
        }
        Ok(PairContext {
            sets: sets.map(|s| s.into_iter().collect()),
        })
    }

    pub fn indicator_set(&self, p: Pattern) -> &[usize] {
        match p.index() {
            Some(idx) => &self.sets[idx],
            None => &[],
        }
    }

    /// Union of all six sets, sorted.
    pub fn neighbor_union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.sets.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(Vec::is_empty)
    }
}

/// Per-tape cache so shared pieces (pattern projections, score rows, final
/// embeddings) are computed once per forward pass.
pub struct RcnContext<'g> {
    pub binding: RcnBinding,
    rcg: &'g RelationalCorrelationGraph,
    dim: usize,
    projections: [Option<TensorId>; CONNECTED_PATTERNS],
    score_rows: [Option<TensorId>; CONNECTED_PATTERNS],
    finals: HashMap<(usize, RcnVariant), TensorId>,
}

impl<'g> RcnContext<'g> {
    pub fn new(binding: RcnBinding, rcg: &'g RelationalCorrelationGraph, dim: usize) -> Self {
        RcnContext {
            binding,
            rcg,
            dim,
            projections: [None; CONNECTED_PATTERNS],
            score_rows: [None; CONNECTED_PATTERNS],
            finals: HashMap::new(),
        }
    }

    pub fn rcg(&self) -> &'g RelationalCorrelationGraph {
        self.rcg
    }

    /// `R W^p`, shared across targets.
    fn projection(&mut self, tape: &mut Tape, p: usize) -> Result<TensorId> {
        if let Some(id) = self.projections[p] {
            return Ok(id);
        }
        let id = tape.matmul(self.binding.relation_emb, self.binding.pattern_transforms[p])?;
        self.projections[p] = Some(id);
        Ok(id)
    }

    /// `1 x |R|` attention scores `(R W^p) a^p` for pattern `p`.
    fn score_row(&mut self, tape: &mut Tape, p: usize) -> Result<TensorId> {
        if let Some(id) = self.score_rows[p] {
            return Ok(id);
        }
        let proj = self.projection(tape, p)?;
        let col = tape.matmul(proj, self.binding.attention[p])?;
        let row = tape.transpose(col)?;
        self.score_rows[p] = Some(row);
        Ok(row)
    }

    /// Softmax attention over one pattern's support set: zero outside the
    /// set, normalised inside. An empty set yields the zero vector.
    fn attention_for_support(
        &mut self,
        tape: &mut Tape,
        p: Pattern,
        support: &[usize],
    ) -> Result<TensorId> {
        let idx = p
            .index()
            .ok_or_else(|| TactError::Contract("attention over NC is undefined".into()))?;
        let nr = self.rcg.relation_count();
        if support.is_empty() {
            return Ok(tape.zeros(1, nr));
        }
        let mut mask = vec![false; nr];
        for &n in support {
            mask[n] = true;
        }
        let scores = self.score_row(tape, idx)?;
        tape.masked_softmax(scores, &mask)
    }

    /// Correlation coefficients for target `t` under pattern `p`, with the
    /// support taken from the graph-level correlation graph.
    pub fn attention_coeffs(
        &mut self,
        tape: &mut Tape,
        t: RelationId,
        p: Pattern,
    ) -> Result<TensorId> {
        let support = self.rcg.indicator_set(t, p).to_vec();
        self.attention_for_support(tape, p, &support)
    }

    /// Eq-style pattern aggregation over six support sets.
    ///
    /// Per-pattern contributions are summed in value-sorted order so the
    /// result does not depend on how the six patterns are numbered.
    fn aggregate_supports(
        &mut self,
        tape: &mut Tape,
        supports: &[Vec<usize>; CONNECTED_PATTERNS],
    ) -> Result<TensorId> {
        let nr = self.rcg.relation_count();
        let mut contributions: Vec<TensorId> = Vec::new();
        for p in Pattern::CONNECTED {
            let idx = p.index().unwrap();
            let support = &supports[idx];
            if support.is_empty() {
                continue;
            }
            let coeffs = self.attention_for_support(tape, p, support)?;
            let mut indicator = vec![0.0; nr];
            for &n in support {
                indicator[n] = 1.0;
            }
            let n_row = tape.constant(1, nr, indicator)?;
            let weighted = tape.hadamard(n_row, coeffs)?;
            let proj = self.projection(tape, idx)?;
            contributions.push(tape.matmul(weighted, proj)?);
        }
        if contributions.is_empty() {
            return Ok(tape.zeros(1, self.dim));
        }
        contributions.sort_by(|a, b| {
            let (va, vb) = (tape.value(*a), tape.value(*b));
            va.iter()
                .zip(vb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut acc = contributions[0];
        for c in &contributions[1..] {
            acc = tape.add(acc, *c)?;
        }
        tape.scale(acc, 1.0 / CONNECTED_PATTERNS as f64)
    }

    /// Graph-level neighbourhood embedding `r_t^N` (`1 x d`).
    pub fn neighborhood_embedding(&mut self, tape: &mut Tape, t: RelationId) -> Result<TensorId> {
        let supports: [Vec<usize>; CONNECTED_PATTERNS] =
            std::array::from_fn(|i| self.rcg.indicator_set(t, Pattern::from_index(i).unwrap()).to_vec());
        self.aggregate_supports(tape, &supports)
    }

    /// Instance-level neighbourhood embedding over a pair context.
    pub fn neighborhood_embedding_for(
        &mut self,
        tape: &mut Tape,
        ctx: &PairContext,
    ) -> Result<TensorId> {
        self.aggregate_supports(tape, &ctx.sets)
    }

    /// Unweighted mean of neighbour embeddings; zero on an empty union.
    fn mean_of_neighbors(&mut self, tape: &mut Tape, neighbors: &[usize]) -> Result<TensorId> {
        if neighbors.is_empty() {
            return Ok(tape.zeros(1, self.dim));
        }
        let mut acc = tape.index_row(self.binding.relation_emb, neighbors[0])?;
        for &n in &neighbors[1..] {
            let row = tape.index_row(self.binding.relation_emb, n)?;
            acc = tape.add(acc, row)?;
        }
        tape.scale(acc, 1.0 / neighbors.len() as f64)
    }

    fn fuse(&mut self, tape: &mut Tape, t: RelationId, neighborhood: TensorId) -> Result<TensorId> {
        let rt = tape.index_row(self.binding.relation_emb, t.0)?;
        let cat = tape.concat_cols(rt, neighborhood)?;
        let mixed = tape.matmul(cat, self.binding.fusion)?;
        tape.relu(mixed)
    }

    /// Final relation embedding `r_t^F` from the graph-level correlation
    /// graph (`1 x d`).
    pub fn final_embedding(
        &mut self,
        tape: &mut Tape,
        t: RelationId,
        variant: RcnVariant,
    ) -> Result<TensorId> {
        if let Some(&id) = self.finals.get(&(t.0, variant)) {
            return Ok(id);
        }
        let id = match variant {
            RcnVariant::NoAggregation => tape.index_row(self.binding.relation_emb, t.0)?,
            RcnVariant::Full => {
                let rn = self.neighborhood_embedding(tape, t)?;
                self.fuse(tape, t, rn)?
            }
            RcnVariant::NoCorrelation => {
                let union = self.rcg.neighbor_union(t);
                let rn = self.mean_of_neighbors(tape, &union)?;
                self.fuse(tape, t, rn)?
            }
        };
        self.finals.insert((t.0, variant), id);
        Ok(id)
    }

    /// Final relation embedding `r_t^F` conditioned on a pair context.
    /// The aggregation is shared across candidate relations of the same
    /// pair; `cached_neighborhood` lets the caller reuse it.
    pub fn final_embedding_for(
        &mut self,
        tape: &mut Tape,
        t: RelationId,
        variant: RcnVariant,
        ctx: &PairContext,
        cached_neighborhood: Option<TensorId>,
    ) -> Result<TensorId> {
        match variant {
            RcnVariant::NoAggregation => tape.index_row(self.binding.relation_emb, t.0),
            RcnVariant::Full => {
                let rn = match cached_neighborhood {
                    Some(id) => id,
                    None => self.neighborhood_embedding_for(tape, ctx)?,
                };
                self.fuse(tape, t, rn)
            }
            RcnVariant::NoCorrelation => {
                let rn = match cached_neighborhood {
                    Some(id) => id,
                    None => {
                        let union = ctx.neighbor_union();
                        self.mean_of_neighbors(tape, &union)?
                    }
                };
                self.fuse(tape, t, rn)
            }
        }
    }

    /// The variant's pair-level neighbourhood term, reusable across
    /// candidate relations (`None` for the aggregation-free variant).
    pub fn pair_neighborhood(
        &mut self,
        tape: &mut Tape,
        variant: RcnVariant,
        ctx: &PairContext,
    ) -> Result<Option<TensorId>> {
        match variant {
            RcnVariant::NoAggregation => Ok(None),
            RcnVariant::Full => Ok(Some(self.neighborhood_embedding_for(tape, ctx)?)),
            RcnVariant::NoCorrelation => {
                let union = ctx.neighbor_union();
                Ok(Some(self.mean_of_neighbors(tape, &union)?))
            }
        }
    }
}

/// One-shot attention coefficients (see [`RcnContext::attention_coeffs`]).
pub fn attention_coeffs(
    tape: &mut Tape,
    binding: &RcnBinding,
    rcg: &RelationalCorrelationGraph,
    t: RelationId,
    p: Pattern,
    dim: usize,
) -> Result<TensorId> {
    RcnContext::new(*binding, rcg, dim).attention_coeffs(tape, t, p)
}

/// One-shot neighbourhood embedding (see
/// [`RcnContext::neighborhood_embedding`]).
pub fn neighborhood_embedding(
    tape: &mut Tape,
    binding: &RcnBinding,
    rcg: &RelationalCorrelationGraph,
    t: RelationId,
    dim: usize,
) -> Result<TensorId> {
    RcnContext::new(*binding, rcg, dim).neighborhood_embedding(tape, t)
}

/// One-shot final embedding (see [`RcnContext::final_embedding`]).
pub fn final_relation_embedding(
    tape: &mut Tape,
    binding: &RcnBinding,
    rcg: &RelationalCorrelationGraph,
    t: RelationId,
    variant: RcnVariant,
    dim: usize,
) -> Result<TensorId> {
    RcnContext::new(*binding, rcg, dim).final_embedding(tape, t, variant)
}

/// Evaluate all learned correlation coefficients as
/// `(target, pattern, neighbor, coefficient)` rows, sorted.
pub fn correlation_coefficients(
    params: &RcnParams,
    rcg: &RelationalCorrelationGraph,
) -> Result<Vec<(usize, Pattern, usize, f64)>> {
    let mut tape = Tape::new();
    let binding = RcnBinding::bind(params, &mut tape);
    let mut ctx = RcnContext::new(binding, rcg, params.dim());
    let mut rows = Vec::new();
    for t in 0..rcg.relation_count() {
        for p in Pattern::CONNECTED {
            let support = rcg.indicator_set(RelationId(t), p);
            if support.is_empty() {
                continue;
            }
            let coeffs = ctx.attention_coeffs(&mut tape, RelationId(t), p)?;
            let values = tape.value(coeffs).to_vec();
            for &n in support {
                rows.push((t, p, n, values[n]));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rcg_from(sets: Vec<[Vec<usize>; 6]>) -> RelationalCorrelationGraph {
        RelationalCorrelationGraph::from_indicator_sets(sets).unwrap()
    }

    fn empty_sets(nr: usize) -> Vec<[Vec<usize>; 6]> {
        (0..nr).map(|_| Default::default()).collect()
    }

    fn params(nr: usize, d: usize, seed: u64) -> RcnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RcnParams::init(nr, d, &mut rng)
    }

    #[test]
    fn empty_indicator_set_gives_zero_vector() {
        let rcg = rcg_from(empty_sets(3));
        let p = params(3, 4, 1);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let coeffs =
            attention_coeffs(&mut tape, &b, &rcg, RelationId(0), Pattern::Parallel, 4).unwrap();
        assert_eq!(tape.value(coeffs), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn singleton_support_gets_weight_one() {
        let mut sets = empty_sets(3);
        sets[0][Pattern::HeadTail.index().unwrap()] = vec![2];
        let rcg = rcg_from(sets);
        let p = params(3, 4, 2);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let coeffs =
            attention_coeffs(&mut tape, &b, &rcg, RelationId(0), Pattern::HeadTail, 4).unwrap();
        assert_eq!(tape.value(coeffs), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn equal_embeddings_split_evenly() {
        let mut sets = empty_sets(3);
        sets[0][Pattern::Loop.index().unwrap()] = vec![1, 2];
        let rcg = rcg_from(sets);
        let mut p = params(3, 4, 3);
        // Make relations 1 and 2 identical.
        let d = p.relation_emb.cols();
        let row1: Vec<f64> = p.relation_emb.data()[d..2 * d].to_vec();
        p.relation_emb.data_mut()[2 * d..3 * d].copy_from_slice(&row1);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let coeffs =
            attention_coeffs(&mut tape, &b, &rcg, RelationId(0), Pattern::Loop, 4).unwrap();
        let v = tape.value(coeffs);
        assert!((v[1] - 0.5).abs() < 1e-12);
        assert!((v[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_neighbors_means_zero_neighborhood() {
        let rcg = rcg_from(empty_sets(2));
        let p = params(2, 4, 4);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let rn = neighborhood_embedding(&mut tape, &b, &rcg, RelationId(1), 4).unwrap();
        assert_eq!(tape.value(rn), &[0.0; 4]);
    }

    /// A single neighbour in a single pattern contributes (1/6) R[i] W^p.
    #[test]
    fn single_neighbor_hand_evaluation() {
        let mut sets = empty_sets(3);
        let pat = Pattern::TailTail;
        sets[1][pat.index().unwrap()] = vec![0];
        let rcg = rcg_from(sets);
        let p = params(3, 4, 5);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let rn = neighborhood_embedding(&mut tape, &b, &rcg, RelationId(1), 4).unwrap();

        let d = 4;
        let w = &p.pattern_transforms[pat.index().unwrap()];
        let r0 = &p.relation_emb.data()[..d];
        let mut want = vec![0.0; d];
        for j in 0..d {
            for k in 0..d {
                want[j] += r0[k] * w.data()[k * d + j];
            }
            want[j] /= 6.0;
        }
        for (got, want) in tape.value(rn).iter().zip(&want) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    /// Dense oracle: evaluate the aggregation with explicit |R|-length
    /// vectors and naive matrix products.
    fn dense_oracle(p: &RcnParams, rcg: &RelationalCorrelationGraph, t: usize) -> Vec<f64> {
        let nr = p.num_relations();
        let d = p.dim();
        let mut total = vec![0.0; d];
        for pat in Pattern::CONNECTED {
            let support = rcg.indicator_set(RelationId(t), pat);
            if support.is_empty() {
                continue;
            }
            let pi = pat.index().unwrap();
            let w = &p.pattern_transforms[pi];
            // proj = R W^p
            let mut proj = vec![0.0; nr * d];
            for i in 0..nr {
                for j in 0..d {
                    for k in 0..d {
                        proj[i * d + j] += p.relation_emb.data()[i * d + k] * w.data()[k * d + j];
                    }
                }
            }
            // scores s_i = proj[i] . a^p, softmax over support
            let mut lambda = vec![0.0; nr];
            let scores: Vec<f64> = (0..nr)
                .map(|i| {
                    (0..d)
                        .map(|j| proj[i * d + j] * p.attention[pi].data()[j])
                        .sum()
                })
                .collect();
            let max = support
                .iter()
                .map(|&i| scores[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = support.iter().map(|&i| (scores[i] - max).exp()).sum();
            for &i in support {
                lambda[i] = (scores[i] - max).exp() / z;
            }
            // indicator (binary) hadamard lambda, times proj
            let mut n_vec = vec![0.0; nr];
            for &i in support {
                n_vec[i] = 1.0;
            }
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..nr {
                    acc += n_vec[i] * lambda[i] * proj[i * d + j];
                }
                total[j] += acc;
            }
        }
        for v in &mut total {
            *v /= 6.0;
        }
        total
    }

    #[test]
    fn aggregation_matches_dense_oracle() {
        let sets = vec![
            [vec![1], vec![], vec![2], vec![], vec![1, 2], vec![]],
            [vec![0, 2], vec![2], vec![], vec![], vec![], vec![0]],
            [vec![], vec![], vec![0, 1, 2], vec![1], vec![], vec![]],
        ];
        let rcg = rcg_from(sets);
        let p = params(3, 5, 6);
        for t in 0..3 {
            let mut tape = Tape::new();
            let b = RcnBinding::bind(&p, &mut tape);
            let rn = neighborhood_embedding(&mut tape, &b, &rcg, RelationId(t), 5).unwrap();
            let want = dense_oracle(&p, &rcg, t);
            for (got, want) in tape.value(rn).iter().zip(&want) {
                assert!((got - want).abs() <= 1e-12, "target {t}");
            }
        }
    }

    #[test]
    fn no_aggregation_passes_raw_embedding_through() {
        let rcg = rcg_from(empty_sets(3));
        let p = params(3, 4, 7);
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let rf = final_relation_embedding(
            &mut tape,
            &b,
            &rcg,
            RelationId(2),
            RcnVariant::NoAggregation,
            4,
        )
        .unwrap();
        assert_eq!(tape.value(rf), &p.relation_emb.data()[8..12]);
    }

    /// With zero neighbourhood and H = [I; I] stacked, the fused output is
    /// relu(r_t).
    #[test]
    fn identity_fusion_reduces_to_relu() {
        let rcg = rcg_from(empty_sets(2));
        let mut p = params(2, 3, 8);
        let d = 3;
        let mut h = vec![0.0; 2 * d * d];
        for i in 0..d {
            h[i * d + i] = 1.0; // top block = I
            h[(d + i) * d + i] = 1.0; // bottom block = I
        }
        p.fusion = Tensor::from_vec(2 * d, d, h).unwrap().with_grad();
        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let rf =
            final_relation_embedding(&mut tape, &b, &rcg, RelationId(0), RcnVariant::Full, 3)
                .unwrap();
        let want: Vec<f64> = p.relation_emb.data()[..3].iter().map(|x| x.max(0.0)).collect();
        assert_eq!(tape.value(rf), &want[..]);
    }

    /// no-RC averages the neighbour embeddings before fusion.
    #[test]
    fn unweighted_variant_uses_mean_of_neighbors() {
        let mut sets = empty_sets(3);
        sets[0][0] = vec![1];
        sets[0][3] = vec![2];
        let rcg = rcg_from(sets);
        let p = params(3, 4, 9);
        let d = 4;

        let mut tape = Tape::new();
        let b = RcnBinding::bind(&p, &mut tape);
        let rf = final_relation_embedding(
            &mut tape,
            &b,
            &rcg,
            RelationId(0),
            RcnVariant::NoCorrelation,
            4,
        )
        .unwrap();

        // Hand evaluation: rn = (r_1 + r_2) / 2, out = relu([r_0 (+) rn] H).
        let r = p.relation_emb.data();
        let rn: Vec<f64> = (0..d).map(|j| (r[d + j] + r[2 * d + j]) / 2.0).collect();
        let mut cat = r[..d].to_vec();
        cat.extend_from_slice(&rn);
        let mut want = vec![0.0; d];
        for j in 0..d {
            for k in 0..2 * d {
                want[j] += cat[k] * p.fusion.data()[k * d + j];
            }
            want[j] = want[j].max(0.0);
        }
        for (got, want) in tape.value(rf).iter().zip(&want) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn coefficients_are_normalized_on_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        use rand::Rng;
        for _ in 0..10 {
            let nr = rng.gen_range(2..7);
            let sets: Vec<[Vec<usize>; 6]> = (0..nr)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (0..nr).filter(|_| rng.gen_bool(0.4)).collect::<Vec<_>>()
                    })
                })
                .collect();
            let rcg = rcg_from(sets);
            let p = params(nr, 6, rng.gen());
            let rows = correlation_coefficients(&p, &rcg).unwrap();
            for (_, _, _, c) in &rows {
                assert!(*c >= 0.0);
            }
            for t in 0..nr {
                for pat in Pattern::CONNECTED {
                    let support = rcg.indicator_set(RelationId(t), pat);
                    if support.is_empty() {
                        continue;
                    }
                    let sum: f64 = rows
                        .iter()
                        .filter(|(rt, rp, _, _)| *rt == t && *rp == pat)
                        .map(|(_, _, _, c)| c)
                        .sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    /// Relabelling the six patterns together with their parameters and
    /// indicator sets leaves the aggregation bit-identical.
    #[test]
    fn pattern_permutation_invariance_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::seq::SliceRandom;
        use rand::Rng;
        for trial in 0..20 {
            let nr = rng.gen_range(2..6);
            let sets: Vec<[Vec<usize>; 6]> = (0..nr)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (0..nr).filter(|_| rng.gen_bool(0.5)).collect::<Vec<_>>()
                    })
                })
                .collect();
            let p = params(nr, 4, 100 + trial);

            let mut perm: Vec<usize> = (0..6).collect();
            perm.shuffle(&mut rng);

            let permuted_sets: Vec<[Vec<usize>; 6]> = sets
                .iter()
                .map(|row| std::array::from_fn(|i| row[perm[i]].clone()))
                .collect();
            let mut p2 = p.clone();
            p2.pattern_transforms =
                std::array::from_fn(|i| p.pattern_transforms[perm[i]].clone());
            p2.attention = std::array::from_fn(|i| p.attention[perm[i]].clone());

            let rcg1 = rcg_from(sets);
            let rcg2 = rcg_from(permuted_sets);
            for t in 0..nr {
                let mut tape1 = Tape::new();
                let b1 = RcnBinding::bind(&p, &mut tape1);
                let rn1 =
                    neighborhood_embedding(&mut tape1, &b1, &rcg1, RelationId(t), 4).unwrap();
                let mut tape2 = Tape::new();
                let b2 = RcnBinding::bind(&p2, &mut tape2);
                let rn2 =
                    neighborhood_embedding(&mut tape2, &b2, &rcg2, RelationId(t), 4).unwrap();
                for (a, b) in tape1.value(rn1).iter().zip(tape2.value(rn2)) {
                    assert_eq!(a.to_bits(), b.to_bits(), "trial {trial} target {t}");
                }
            }
        }
    }

    /// Fused outputs go through relu, so the full and unweighted variants
    /// never produce negative entries.
    #[test]
    fn fused_embeddings_are_nonnegative() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for trial in 0..10 {
            let nr = rng.gen_range(2..6);
            let sets: Vec<[Vec<usize>; 6]> = (0..nr)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (0..nr).filter(|_| rng.gen_bool(0.4)).collect::<Vec<_>>()
                    })
                })
                .collect();
            let rcg = rcg_from(sets);
            let p = params(nr, 5, 200 + trial);
            let mut tape = Tape::new();
            let b = RcnBinding::bind(&p, &mut tape);
            let mut ctx = RcnContext::new(b, &rcg, 5);
            for t in 0..nr {
                for variant in [RcnVariant::Full, RcnVariant::NoCorrelation] {
                    let rf = ctx.final_embedding(&mut tape, RelationId(t), variant).unwrap();
                    assert!(tape.value(rf).iter().all(|&x| x >= 0.0));
                }
            }
        }
    }

    /// Gradients of a scalar probe of r_t^F check out against finite
    /// differences for every parameter group.
    #[test]
    fn final_embedding_gradients_pass_fd_check() {
        let sets = vec![
            [vec![1], vec![], vec![0, 2], vec![], vec![2], vec![]],
            [vec![0], vec![2], vec![], vec![1], vec![], vec![]],
            [vec![], vec![], vec![1], vec![], vec![0], vec![2]],
        ];
        let rcg = rcg_from(sets);
        let base = params(3, 4, 12);
        let flat: Vec<Tensor> = std::iter::once(base.relation_emb.clone())
            .chain(base.pattern_transforms.iter().cloned())
            .chain(base.attention.iter().cloned())
            .chain(std::iter::once(base.fusion.clone()))
            .collect();

        let rebuild = |flat: &[Tensor]| RcnParams {
            relation_emb: flat[0].clone(),
            pattern_transforms: std::array::from_fn(|i| flat[1 + i].clone()),
            attention: std::array::from_fn(|i| flat[7 + i].clone()),
            fusion: flat[13].clone(),
        };
        let rcg_ref = &rcg;
        let f = move |flat: &[Tensor]| -> Result<(f64, Vec<Vec<f64>>)> {
            let p = rebuild(flat);
            let mut tape = Tape::new();
            let b = RcnBinding::bind(&p, &mut tape);
            let mut ctx = RcnContext::new(b, rcg_ref, 4);
            let mut total = None;
            for t in 0..3 {
                let rf = ctx.final_embedding(&mut tape, RelationId(t), RcnVariant::Full)?;
                let s = tape.sum(rf)?;
                total = Some(match total {
                    None => s,
                    Some(acc) => tape.add(acc, s)?,
                });
            }
            let loss = total.unwrap();
            let grads = tape.backward(loss)?;
            let ids = [b.relation_emb]
                .into_iter()
                .chain(b.pattern_transforms)
                .chain(b.attention)
                .chain([b.fusion]);
            Ok((
                tape.scalar_value(loss)?,
                ids.map(|id| grads.get(id).unwrap().to_vec()).collect(),
            ))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let err = crate::tensor::grad_check(f, &flat, 1e-5, 50, &mut rng).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }
}
