//! Full-model parameter set, tape binding, and end-to-end triple scoring.

use std::collections::BTreeMap;

use crate::error::{Result, TactError};
use crate::gsn::{self, GsnBinding, GsnParams};
use crate::kg::{EdgeId, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::rcg::RelationalCorrelationGraph;
use crate::rcn::{PairContext, RcnBinding, RcnContext, RcnParams, RcnVariant};
use crate::scoring::{self, ScoreParts};
use crate::subgraph::{init_node_features, EnclosingSubgraph};
use crate::tensor::{Tape, Tensor, TensorId};

/// Model variant selectable on the command line. `Base` scores with the
/// full relational correlation module but uses only the relation part of
/// the scoring input.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModelVariant {
    Full,
    Base,
    NoRa,
    NoRc,
}

impl ModelVariant {
    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::Full => "full",
            ModelVariant::Base => "base",
            ModelVariant::NoRa => "no-ra",
            ModelVariant::NoRc => "no-rc",
        }
    }

    pub fn parse(s: &str) -> Result<ModelVariant> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "base" => Ok(ModelVariant::Base),
            "no-ra" => Ok(ModelVariant::NoRa),
            "no-rc" => Ok(ModelVariant::NoRc),
            other => Err(TactError::Config(format!(
                "unknown variant `{other}` (expected full, base, no-ra or no-rc)"
            ))),
        }
    }

    pub fn rcn_variant(self) -> RcnVariant {
        match self {
            ModelVariant::Full | ModelVariant::Base => RcnVariant::Full,
            ModelVariant::NoRa => RcnVariant::NoAggregation,
            ModelVariant::NoRc => RcnVariant::NoCorrelation,
        }
    }
}

/// Architecture hyperparameters that shape the parameter tensors.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub dim: usize,
    /// Message-passing layers `L`.
    pub layers: usize,
    /// Neighbourhood radius `k` for subgraph extraction.
    pub hops: usize,
    pub parts: ScoreParts,
    pub variant: ModelVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 32,
            layers: 2,
            hops: 2,
            parts: ScoreParts::parse("ngr").unwrap(),
            variant: ModelVariant::Full,
        }
    }
}

impl ModelConfig {
    /// Distance cap for double-radius labels: one-hot width minus one.
    pub fn label_cap(&self) -> usize {
        self.dim - 1
    }
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub rcn: RcnParams,
    pub gsn: GsnParams,
    /// Scoring column, `(active width) x 1`.
    pub score_weight: Tensor,
}

impl ModelParams {
    /// Seeded uniform init on `[-1/sqrt(d), 1/sqrt(d)]`, drawing tensors in
    /// checkpoint-name order.
    pub fn init(cfg: &ModelConfig, num_relations: usize, rng: &mut impl rand::Rng) -> ModelParams {
        let bound = 1.0 / (cfg.dim as f64).sqrt();
        let rcn = RcnParams::init(num_relations, cfg.dim, rng);
        let gsn = GsnParams::init(2 * num_relations, cfg.dim, cfg.layers, rng);
        let score_weight =
            Tensor::uniform(cfg.parts.width(cfg.dim), 1, bound, rng).with_grad();
        ModelParams {
            rcn,
            gsn,
            score_weight,
        }
    }

    pub fn num_relations(&self) -> usize {
        self.rcn.num_relations()
    }

    /// Tensors with their checkpoint names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("R".into(), &self.rcn.relation_emb)];
        for (i, w) in self.rcn.pattern_transforms.iter().enumerate() {
            out.push((format!("W_p{i}"), w));
        }
        for (i, a) in self.rcn.attention.iter().enumerate() {
            out.push((format!("a_p{i}"), a));
        }
        out.push(("H".into(), &self.rcn.fusion));
        for (l, layer) in self.gsn.layers.iter().enumerate() {
            for (r, w) in layer.rel_weights.iter().enumerate() {
                out.push((format!("gsn.l{l}.rel{r}"), w));
            }
            out.push((format!("gsn.l{l}.self"), &layer.self_weight));
        }
        out.push(("W_S".into(), &self.score_weight));
        out
    }

    /// Mutable view matching [`ModelParams::named`] order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("R".into(), &mut self.rcn.relation_emb)];
        for (i, w) in self.rcn.pattern_transforms.iter_mut().enumerate() {
            out.push((format!("W_p{i}"), w));
        }
        for (i, a) in self.rcn.attention.iter_mut().enumerate() {
            out.push((format!("a_p{i}"), a));
        }
        out.push(("H".into(), &mut self.rcn.fusion));
        for (l, layer) in self.gsn.layers.iter_mut().enumerate() {
            for (r, w) in layer.rel_weights.iter_mut().enumerate() {
                out.push((format!("gsn.l{l}.rel{r}"), w));
            }
            out.push((format!("gsn.l{l}.self"), &mut layer.self_weight));
        }
        out.push(("W_S".into(), &mut self.score_weight));
        out
    }

    /// Rebuild from named tensors, validating the exact name set and every
    /// shape against the configuration.
    pub fn from_named(
        cfg: &ModelConfig,
        num_relations: usize,
        mut tensors: BTreeMap<String, Tensor>,
    ) -> Result<ModelParams> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let template = ModelParams::init(cfg, num_relations, &mut rng);
        let mut take = |name: &str, shape: (usize, usize)| -> Result<Tensor> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| TactError::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape {
                return Err(TactError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
            Ok(t.with_grad())
        };
        let mut out = template.clone();
        for (name, slot) in out.named_mut() {
            *slot = take(&name, slot.shape())?;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(TactError::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(out)
    }
}

use rand::SeedableRng;

/// Tape handles for every bound parameter, plus the flat name -> id view
/// used for gradient extraction.
pub struct ModelBinding {
    pub rcn: RcnBinding,
    pub gsn: GsnBinding,
    pub score_weight: TensorId,
}

impl ModelBinding {
    pub fn bind(params: &ModelParams, tape: &mut Tape) -> ModelBinding {
        ModelBinding {
            rcn: RcnBinding::bind(&params.rcn, tape),
            gsn: GsnBinding::bind(&params.gsn, tape),
            score_weight: tape.leaf(&params.score_weight),
        }
    }

    /// Ids in [`ModelParams::named`] order.
    pub fn ordered_ids(&self) -> Vec<TensorId> {
        let mut out = vec![self.rcn.relation_emb];
        out.extend(self.rcn.pattern_transforms);
        out.extend(self.rcn.attention);
        out.push(self.rcn.fusion);
        for layer in &self.gsn.layers {
            out.extend(layer.rel_weights.iter().copied());
            out.push(layer.self_weight);
        }
        out.push(self.score_weight);
        out
    }
}

/// Everything pair-dependent that candidate relations share when scoring
/// the same `(u, v)`: the relational context with its aggregated
/// neighbourhood term and the encoded subgraph structure.
pub struct PreparedPair {
    pub context: Option<PairContext>,
    pub neighborhood: Option<TensorId>,
    pub structure: Option<(TensorId, TensorId, TensorId)>,
}

/// Per-tape scoring state: the bound parameters plus the relation-embedding
/// caches shared by every triple scored on this tape.
pub struct Scorer<'g> {
    pub binding: ModelBinding,
    pub rcn_ctx: RcnContext<'g>,
    kg: &'g KnowledgeGraph,
    cfg: ModelConfig,
    num_relations: usize,
}

impl<'g> Scorer<'g> {
    pub fn new(
        params: &ModelParams,
        kg: &'g KnowledgeGraph,
        rcg: &'g RelationalCorrelationGraph,
        cfg: ModelConfig,
        tape: &mut Tape,
    ) -> Scorer<'g> {
        let binding = ModelBinding::bind(params, tape);
        let rcn_ctx = RcnContext::new(binding.rcn, rcg, cfg.dim);
        Scorer {
            binding,
            rcn_ctx,
            kg,
            cfg,
            num_relations: params.num_relations(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Encode a labelled subgraph into `(e_G, e_u, e_v)`.
    pub fn encode_structure(
        &self,
        tape: &mut Tape,
        sub: &EnclosingSubgraph,
    ) -> Result<(TensorId, TensorId, TensorId)> {
        let feats = init_node_features(&sub.labels, self.cfg.dim)?;
        let fid = tape.leaf(&feats);
        gsn::encode_subgraph(tape, sub, &self.binding.gsn, self.num_relations, fid)
    }

    /// Build the shared pieces for scoring candidates over `(u, v)`.
    /// `exclude` is the scored triple's own edge id when stored; `sub` must
    /// be given (already labelled) when structural parts are active.
    pub fn prepare_pair(
        &mut self,
        tape: &mut Tape,
        u: EntityId,
        v: EntityId,
        exclude: Option<EdgeId>,
        sub: Option<&EnclosingSubgraph>,
    ) -> Result<PreparedPair> {
        let (context, neighborhood) = if self.cfg.parts.use_r {
            let ctx = PairContext::from_graph(self.kg, u, v, exclude)?;
            let rn = self
                .rcn_ctx
                .pair_neighborhood(tape, self.cfg.variant.rcn_variant(), &ctx)?;
            (Some(ctx), rn)
        } else {
            (None, None)
        };
        let structure = if self.cfg.parts.needs_structure() {
            let sub = sub.ok_or_else(|| {
                TactError::Contract("structural score parts need a subgraph".into())
            })?;
            Some(self.encode_structure(tape, sub)?)
        } else {
            None
        };
        Ok(PreparedPair {
            context,
            neighborhood,
            structure,
        })
    }

    /// Score one candidate relation against a prepared pair.
    pub fn score_prepared(
        &mut self,
        tape: &mut Tape,
        rel: RelationId,
        prepared: &PreparedPair,
    ) -> Result<TensorId> {
        let r_final = if self.cfg.parts.use_r {
            let ctx = prepared.context.as_ref().ok_or_else(|| {
                TactError::Contract("relation score part needs a pair context".into())
            })?;
            Some(self.rcn_ctx.final_embedding_for(
                tape,
                rel,
                self.cfg.variant.rcn_variant(),
                ctx,
                prepared.neighborhood,
            )?)
        } else {
            None
        };
        let (e_g, e_u, e_v) = match prepared.structure {
            Some((g, u, v)) => (Some(g), Some(u), Some(v)),
            None => (None, None, None),
        };
        scoring::score(
            tape,
            self.cfg.parts,
            r_final,
            e_g,
            e_u,
            e_v,
            self.binding.score_weight,
        )
    }

    /// Score a triple given its (already labelled) enclosing subgraph.
    /// `sub` may be `None` only when no structural part is active.
    pub fn score_triple(
        &mut self,
        tape: &mut Tape,
        triple: Triple,
        exclude: Option<EdgeId>,
        sub: Option<&EnclosingSubgraph>,
    ) -> Result<TensorId> {
        let prepared = self.prepare_pair(tape, triple.head, triple.tail, exclude, sub)?;
        self.score_prepared(tape, triple.rel, &prepared)
    }
}
