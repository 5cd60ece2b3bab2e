//! Classification and ranking metrics plus the evaluation protocols that
//! drive them.
//!
//! AUC-PR uses the average-precision formulation with pessimistic tie
//! handling (tied negatives sort ahead of tied positives). Relation ranking
//! is filtered: competing candidates that are known facts are discarded,
//! and tied scores contribute the average rank.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TactError};
use crate::kg::{KnowledgeGraph, RelationId, Triple};
use crate::model::{ModelConfig, ModelParams, Scorer};
use crate::rcg::{build_rcg, RelationalCorrelationGraph};
use crate::scoring::sample_negatives_irreflexive;
use crate::subgraph::extract_enclosing_subgraph;
use crate::tensor::Tape;

/// Average precision over positive and negative score lists.
///
/// All scores are sorted descending; at equal scores negatives are ranked
/// first. The result is the mean precision at each positive's position.
pub fn auc_pr(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(TactError::Contract(
            "auc_pr needs non-empty positive and negative scores".into(),
        ));
    }
    let mut items: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    // Descending score; negatives before positives on ties.
    items.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut true_pos = 0usize;
    let mut false_pos = 0usize;
    let mut precision_sum = 0.0;
    for (_, is_pos) in items {
        if is_pos {
            true_pos += 1;
            precision_sum += true_pos as f64 / (true_pos + false_pos) as f64;
        } else {
            false_pos += 1;
        }
    }
    Ok(precision_sum / pos_scores.len() as f64)
}

/// Tie-averaged filtered rank of the candidate at `gt`. Candidates with
/// `excluded[i]` true are ignored; `excluded[gt]` must be false.
pub fn filtered_rank(scores: &[f64], gt: usize, excluded: &[bool]) -> f64 {
    debug_assert!(!excluded[gt]);
    let gt_score = scores[gt];
    let mut higher = 0usize;
    let mut ties = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if i == gt || excluded[i] {
            continue;
        }
        if s > gt_score {
            higher += 1;
        } else if s == gt_score {
            ties += 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingMetrics {
    pub mrr: f64,
    /// `(N, fraction of ranks <= N)` pairs.
    pub hits: Vec<(usize, f64)>,
}

/// Mean reciprocal rank and Hits@N over per-query ranks.
pub fn mrr_hits(ranks: &[f64], ns: &[usize]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(TactError::Contract("mrr_hits needs at least one rank".into()));
    }
    if ranks.iter().any(|&r| r < 1.0) {
        return Err(TactError::Contract("ranks must be >= 1".into()));
    }
    let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64;
    let hits = ns
        .iter()
        .map(|&n| {
            let frac = ranks.iter().filter(|&&r| r <= n as f64).count() as f64
                / ranks.len() as f64;
            (n, frac)
        })
        .collect();
    Ok(RankingMetrics { mrr, hits })
}

/// Known-fact membership set used for filtered ranking.
#[derive(Debug, Default)]
pub struct TripleSet(HashSet<(usize, usize, usize)>);

impl TripleSet {
    pub fn from_triples<'a, I: IntoIterator<Item = &'a Triple>>(iter: I) -> TripleSet {
        TripleSet(
            iter.into_iter()
                .map(|t| (t.head.0, t.rel.0, t.tail.0))
                .collect(),
        )
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.0.contains(&(t.head.0, t.rel.0, t.tail.0))
    }

    pub fn insert(&mut self, t: &Triple) {
        self.0.insert((t.head.0, t.rel.0, t.tail.0));
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scoring facade over a fact graph, its correlation graph, and trained
/// parameters. Queries are scored on per-call tapes, so evaluation may run
/// in parallel across queries.
pub struct Evaluator<'a> {
    kg: &'a KnowledgeGraph,
    rcg: &'a RelationalCorrelationGraph,
    params: &'a ModelParams,
    cfg: ModelConfig,
}

/// Owning wrapper that builds the correlation graph for a fact graph once.
pub struct EvalContext {
    pub rcg: RelationalCorrelationGraph,
}

impl EvalContext {
    pub fn new(kg: &KnowledgeGraph) -> EvalContext {
        EvalContext { rcg: build_rcg(kg) }
    }
}

impl<'a> Evaluator<'a> {
    pub fn with_rcg(
        kg: &'a KnowledgeGraph,
        rcg: &'a RelationalCorrelationGraph,
        params: &'a ModelParams,
        cfg: ModelConfig,
    ) -> Evaluator<'a> {
        Evaluator {
            kg,
            rcg,
            params,
            cfg,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Score one triple. The triple's own edge, when present in the fact
    /// graph, is excluded from its subgraph and relational context.
    pub fn score_triple(&self, t: Triple) -> Result<f64> {
        let mut tape = Tape::new();
        let mut scorer = Scorer::new(self.params, self.kg, self.rcg, self.cfg, &mut tape);
        let exclude = self.kg.find_edge(t.head, t.rel, t.tail);
        let sub;
        let sub_ref = if self.cfg.parts.needs_structure() {
            sub = extract_enclosing_subgraph(self.kg, t.head, t.tail, self.cfg.hops, exclude)?
                .labeled(self.cfg.label_cap());
            Some(&sub)
        } else {
            None
        };
        let id = scorer.score_triple(&mut tape, t, exclude, sub_ref)?;
        tape.scalar_value(id)
    }

    pub fn score_triples(&self, triples: &[Triple]) -> Result<Vec<f64>> {
        triples
            .par_iter()
            .map(|t| self.score_triple(*t))
            .collect()
    }

    /// Filtered rank of `gt` among all candidate relations for `(u, v)`.
    /// Candidates (other than the ground truth) present in `filter` are
    /// discarded before ranking.
    pub fn relation_rank(
        &self,
        filter: &TripleSet,
        u: crate::kg::EntityId,
        v: crate::kg::EntityId,
        gt: RelationId,
    ) -> Result<f64> {
        let nr = self.kg.num_relations();
        let mut tape = Tape::new();
        let mut scorer = Scorer::new(self.params, self.kg, self.rcg, self.cfg, &mut tape);

        // Candidates share the pair's context and subgraph, except when a
        // candidate fact is stored and must be excluded from its own score.
        let base_sub;
        let base_sub_ref = if self.cfg.parts.needs_structure() {
            base_sub = extract_enclosing_subgraph(self.kg, u, v, self.cfg.hops, None)?
                .labeled(self.cfg.label_cap());
            Some(&base_sub)
        } else {
            None
        };
        let base = scorer.prepare_pair(&mut tape, u, v, None, base_sub_ref)?;

        let mut scores = Vec::with_capacity(nr);
        let mut excluded = Vec::with_capacity(nr);
        for r in 0..nr {
            let rel = RelationId(r);
            let candidate = Triple::new(u, rel, v);
            excluded.push(rel != gt && filter.contains(&candidate));
            let id = match self.kg.find_edge(u, rel, v) {
                Some(edge) => {
                    let sub;
                    let sub_ref = if self.cfg.parts.needs_structure() {
                        sub = extract_enclosing_subgraph(
                            self.kg,
                            u,
                            v,
                            self.cfg.hops,
                            Some(edge),
                        )?
                        .labeled(self.cfg.label_cap());
                        Some(&sub)
                    } else {
                        None
                    };
                    let prepared = scorer.prepare_pair(&mut tape, u, v, Some(edge), sub_ref)?;
                    scorer.score_prepared(&mut tape, rel, &prepared)?
                }
                None => scorer.score_prepared(&mut tape, rel, &base)?,
            };
            scores.push(tape.scalar_value(id)?);
        }
        Ok(filtered_rank(&scores, gt.0, &excluded))
    }

    /// Ranks for a batch of queries, in query order. Reflexive queries
    /// cannot be scored with structural parts and are skipped (counted).
    pub fn rank_queries(
        &self,
        queries: &[Triple],
        filter: &TripleSet,
    ) -> Result<(Vec<f64>, usize)> {
        let scorable: Vec<&Triple> = queries
            .iter()
            .filter(|t| !self.cfg.parts.needs_structure() || !t.is_reflexive())
            .collect();
        let skipped = queries.len() - scorable.len();
        let ranks: Result<Vec<f64>> = scorable
            .par_iter()
            .map(|t| self.relation_rank(filter, t.head, t.tail, t.rel))
            .collect();
        Ok((ranks?, skipped))
    }

    /// Classification protocol: corrupt every positive once (seeded), score
    /// both sides, return the AUC-PR.
    pub fn auc_pr_protocol(&self, positives: &[Triple], seed: u64) -> Result<AucPrOutcome> {
        let scorable: Vec<Triple> = positives
            .iter()
            .copied()
            .filter(|t| !self.cfg.parts.needs_structure() || !t.is_reflexive())
            .collect();
        let skipped = positives.len() - scorable.len();
        if scorable.is_empty() {
            return Err(TactError::Contract("no scorable positives for AUC-PR".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negatives: Vec<Triple> = scorable
            .iter()
            .map(|t| {
                sample_negatives_irreflexive(self.kg, *t, 1, &mut rng).map(|mut v| v.remove(0))
            })
            .collect::<Result<_>>()?;
        let pos_scores = self.score_triples(&scorable)?;
        let neg_scores = self.score_triples(&negatives)?;
        Ok(AucPrOutcome {
            auc_pr: auc_pr(&pos_scores, &neg_scores)?,
            n_positives: scorable.len(),
            skipped_reflexive: skipped,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AucPrOutcome {
    pub auc_pr: f64,
    pub n_positives: usize,
    pub skipped_reflexive: usize,
}

/// Rank queries with constant per-relation scores (their frequencies).
/// `counts` is indexed by relation id; the filtered-rank computation is the
/// same as for model scores.
pub fn frequency_ranks(
    counts: &[usize],
    queries: &[Triple],
    filter: &TripleSet,
) -> Result<Vec<f64>> {
    let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    queries
        .iter()
        .map(|t| {
            if t.rel.0 >= scores.len() {
                return Err(TactError::Index(format!(
                    "relation {} out of range for frequency table",
                    t.rel.0
                )));
            }
            let excluded: Vec<bool> = (0..scores.len())
                .map(|r| {
                    r != t.rel.0 && filter.contains(&Triple::new(t.head, RelationId(r), t.tail))
                })
                .collect();
            Ok(filtered_rank(&scores, t.rel.0, &excluded))
        })
        .collect()
}

/// Machine-readable evaluation summary.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsSummary {
    pub auc_pr: Option<f64>,
    pub mrr: Option<f64>,
    pub hits: BTreeMap<String, f64>,
    pub n_queries: usize,
    pub seed: u64,
}

impl MetricsSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if let Some(a) = self.auc_pr {
            out.push_str(&format!("auc_pr\t{a}\n"));
        }
        if let Some(m) = self.mrr {
            out.push_str(&format!("mrr\t{m}\n"));
        }
        for (k, v) in &self.hits {
            out.push_str(&format!("hits@{k}\t{v}\n"));
        }
        out.push_str(&format!("n_queries\t{}\n", self.n_queries));
        out.push_str(&format!("seed\t{}\n", self.seed));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{build_graph, EntityId};
    use crate::model::ModelVariant;
    use crate::scoring::ScoreParts;

    #[test]
    fn perfect_separation_scores_one() {
        assert_eq!(auc_pr(&[0.9], &[0.1]).unwrap(), 1.0);
    }

    #[test]
    fn inverted_pair_scores_half() {
        assert_eq!(auc_pr(&[0.1], &[0.9]).unwrap(), 0.5);
    }

    #[test]
    fn interleaved_example_matches_hand_value() {
        // Sorted: 3(+), 2(-), 1(+): precisions 1 and 2/3.
        let got = auc_pr(&[3.0, 1.0], &[2.0]).unwrap();
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sides_are_rejected() {
        assert!(auc_pr(&[], &[1.0]).is_err());
        assert!(auc_pr(&[1.0], &[]).is_err());
    }

    /// Exhaustive-threshold oracle: precision values derived by counting,
    /// not by sweeping.
    fn auc_pr_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut distinct: Vec<f64> = pos.to_vec();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        let mut total = 0.0;
        for &s in &distinct {
            let pos_above = pos.iter().filter(|&&p| p > s).count();
            let neg_geq = neg.iter().filter(|&&n| n >= s).count();
            let tied = pos.iter().filter(|&&p| p == s).count();
            for j in 1..=tied {
                total += (pos_above + j) as f64 / (pos_above + neg_geq + j) as f64;
            }
        }
        total / pos.len() as f64
    }

    #[test]
    fn matches_threshold_oracle_on_random_sets() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let np = rng.gen_range(1..10);
            let nn = rng.gen_range(1..10);
            // Coarse grid to force plenty of ties.
            let pos: Vec<f64> = (0..np).map(|_| rng.gen_range(0..5) as f64).collect();
            let neg: Vec<f64> = (0..nn).map(|_| rng.gen_range(0..5) as f64).collect();
            let got = auc_pr(&pos, &neg).unwrap();
            let want = auc_pr_oracle(&pos, &neg);
            assert_eq!(got, want, "pos {pos:?} neg {neg:?}");
            assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn rank_of_strictly_highest_is_one() {
        assert_eq!(filtered_rank(&[5.0, 1.0, 2.0], 0, &[false; 3]), 1.0);
    }

    #[test]
    fn full_tie_is_midpoint() {
        assert_eq!(filtered_rank(&[2.0; 5], 2, &[false; 5]), 3.0);
    }

    #[test]
    fn hand_ranked_example() {
        // gt scores 2 against competitors 3 and 1.
        assert_eq!(filtered_rank(&[3.0, 2.0, 1.0], 1, &[false; 3]), 2.0);
    }

    #[test]
    fn filtering_discards_competitors() {
        assert_eq!(filtered_rank(&[3.0, 2.0, 1.0], 1, &[true, false, false]), 1.0);
    }

    #[test]
    fn filtered_rank_never_exceeds_unfiltered() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(2..10);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
            let gt = rng.gen_range(0..n);
            let mut excluded: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            excluded[gt] = false;
            let filtered = filtered_rank(&scores, gt, &excluded);
            let unfiltered = filtered_rank(&scores, gt, &vec![false; n]);
            assert!(filtered <= unfiltered);
            assert!(filtered >= 1.0);
        }
    }

    #[test]
    fn mrr_of_all_firsts_is_one() {
        let m = mrr_hits(&[1.0, 1.0, 1.0], &[1, 5, 10]).unwrap();
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.hits[0], (1, 1.0));
    }

    #[test]
    fn mrr_hand_arithmetic() {
        let m = mrr_hits(&[1.0, 2.0, 4.0], &[1, 5, 10]).unwrap();
        assert!((m.mrr - 0.5833333333333334).abs() < 1e-12);
        assert!((m.hits[0].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hits_are_monotone_in_n() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let ranks: Vec<f64> = (0..rng.gen_range(1..30))
                .map(|_| rng.gen_range(1..20) as f64)
                .collect();
            let m = mrr_hits(&ranks, &[1, 5, 10]).unwrap();
            assert!(m.hits[0].1 <= m.hits[1].1);
            assert!(m.hits[1].1 <= m.hits[2].1);
            assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        }
    }

    #[test]
    fn empty_ranks_are_rejected() {
        assert!(mrr_hits(&[], &[1]).is_err());
    }

    fn toy_eval() -> (KnowledgeGraph, RelationalCorrelationGraph, ModelParams, ModelConfig) {
        let raw: Vec<_> = [
            ("a", "r0", "b"),
            ("b", "r1", "c"),
            ("c", "r0", "d"),
            ("a", "r1", "c"),
            ("d", "r1", "b"),
        ]
        .iter()
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect();
        let kg = build_graph(&raw, None).unwrap();
        let rcg = build_rcg(&kg);
        let cfg = ModelConfig {
            dim: 4,
            layers: 1,
            hops: 2,
            parts: ScoreParts::parse("ngr").unwrap(),
            variant: ModelVariant::Full,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(&cfg, kg.num_relations(), &mut rng);
        (kg, rcg, params, cfg)
    }

    #[test]
    fn model_ranks_are_deterministic() {
        let (kg, rcg, params, cfg) = toy_eval();
        let ev = Evaluator::with_rcg(&kg, &rcg, &params, cfg);
        let filter = TripleSet::from_triples(kg.triples());
        let queries: Vec<Triple> = kg.triples().to_vec();
        let (r1, s1) = ev.rank_queries(&queries, &filter).unwrap();
        let (r2, s2) = ev.rank_queries(&queries, &filter).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);
        assert!(r1.iter().all(|&r| r >= 1.0));
    }

    #[test]
    fn auc_pr_protocol_is_seeded() {
        let (kg, rcg, params, cfg) = toy_eval();
        let ev = Evaluator::with_rcg(&kg, &rcg, &params, cfg);
        let pos: Vec<Triple> = kg.triples().to_vec();
        let a = ev.auc_pr_protocol(&pos, 11).unwrap();
        let b = ev.auc_pr_protocol(&pos, 11).unwrap();
        assert_eq!(a.auc_pr, b.auc_pr);
        assert_eq!(a.n_positives, 5);
    }

    #[test]
    fn frequency_ranks_respect_counts_and_filter() {
        let (kg, _, _, _) = toy_eval();
        // r0 appears 2x, r1 appears 3x.
        let counts = kg.relation_counts();
        assert_eq!(counts, vec![2, 3]);
        let filter = TripleSet::from_triples(kg.triples());
        let q_frequent = Triple::new(EntityId(0), RelationId(1), EntityId(1));
        let q_rare = Triple::new(EntityId(0), RelationId(0), EntityId(1));
        let ranks = frequency_ranks(&counts, &[q_frequent], &filter).unwrap();
        // (a, r0, b) is a known fact, so the competitor r0 is filtered out.
        assert_eq!(ranks, vec![1.0]);
        let ranks = frequency_ranks(&counts, &[q_rare], &filter).unwrap();
        assert_eq!(ranks, vec![2.0]);
    }

    #[test]
    fn uniform_frequencies_rank_at_midpoint() {
        let (_kg, _, _, _) = toy_eval();
        let counts = vec![7, 7];
        let filter = TripleSet::default();
        let q = Triple::new(EntityId(0), RelationId(0), EntityId(3));
        let ranks = frequency_ranks(&counts, &[q], &filter).unwrap();
        assert_eq!(ranks, vec![1.5]);
    }

    #[test]
    fn most_frequent_relation_tops_unfiltered_ranking() {
        let counts = vec![1, 9, 4];
        let filter = TripleSet::default();
        let queries: Vec<Triple> = (0..4)
            .map(|i| Triple::new(EntityId(i), RelationId(1), EntityId(i + 1)))
            .collect();
        let ranks = frequency_ranks(&counts, &queries, &filter).unwrap();
        let m = mrr_hits(&ranks, &[1]).unwrap();
        assert_eq!(m.mrr, 1.0);
    }

    #[test]
    fn summary_tsv_lists_all_metrics() {
        let summary = MetricsSummary {
            auc_pr: Some(0.5),
            mrr: Some(0.25),
            hits: [("1".to_string(), 0.1), ("10".to_string(), 0.9)]
                .into_iter()
                .collect(),
            n_queries: 42,
            seed: 7,
        };
        let tsv = summary.to_tsv();
        assert!(tsv.contains("auc_pr\t0.5"));
        assert!(tsv.contains("hits@10\t0.9"));
        assert!(tsv.contains("n_queries\t42"));
    }
}
