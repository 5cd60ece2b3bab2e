//! End-to-end optimisation: batched margin training over corrupted triples,
//! Adam updates, and self-describing JSON checkpoints.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TactError};
use crate::eval;
use crate::kg::{EdgeId, KnowledgeGraph, Triple};
use crate::model::{ModelConfig, ModelParams, ModelVariant, Scorer};
use crate::rcg::build_rcg;
use crate::scoring::{
    hinge_loss, sample_negatives_irreflexive, sample_training_negatives, ScoreParts,
};
use crate::subgraph::{extract_enclosing_subgraph, EnclosingSubgraph};
use crate::tensor::{Tape, Tensor, TensorId};

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub n_neg: usize,
    /// Probability that a training negative corrupts the relation instead
    /// of an endpoint.
    pub rel_neg_prob: f64,
    pub seed: u64,
    /// Keep the epoch with the best validation AUC-PR instead of the last.
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 0.01,
            batch_size: 16,
            epochs: 10,
            margin: 8.0,
            n_neg: 1,
            rel_neg_prob: 0.75,
            seed: 0,
            early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.dim < 2 {
            return Err(TactError::Config("dim must be at least 2".into()));
        }
        if self.model.layers == 0 || self.model.hops == 0 {
            return Err(TactError::Config("layers and hops must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TactError::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.margin > 0.0) {
            return Err(TactError::Config("lr and margin must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rel_neg_prob) {
            return Err(TactError::Config(
                "relation-corruption probability must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected first/second moment accumulators, aligned with
/// [`ModelParams::named`] order.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        let shapes: Vec<usize> = params.named().iter().map(|(_, t)| t.data().len()).collect();
        AdamState {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. `grads` must align with [`ModelParams::named`] order;
/// a non-finite gradient aborts with the parameter's name.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let mut named = params.named_mut();
    if grads.len() != named.len() {
        return Err(TactError::Contract(format!(
            "got {} gradients for {} parameters",
            grads.len(),
            named.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, (name, tensor)) in named.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != tensor.data().len() {
            return Err(TactError::Contract(format!(
                "gradient for `{name}` has length {}, expected {}",
                g.len(),
                tensor.data().len()
            )));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(TactError::Numeric(format!(
                "non-finite gradient for parameter `{name}`"
            )));
        }
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        let data = tensor.data_mut();
        for j in 0..g.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub dim: usize,
    pub layers: usize,
    pub hops: usize,
    pub parts: String,
    pub variant: String,
    pub margin: f64,
    pub seed: u64,
    /// Relation names in id order; entity vocabularies are never stored
    /// because the model is entity-independent.
    pub relations: Vec<String>,
}

/// Trained parameters plus everything needed to rebuild the scoring setup.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            dim: self.meta.dim,
            layers: self.meta.layers,
            hops: self.meta.hops,
            parts: ScoreParts::parse(&self.meta.parts)?,
            variant: ModelVariant::parse(&self.meta.variant)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    meta: CheckpointMeta,
    tensors: BTreeMap<String, TensorJson>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tensors: BTreeMap<String, TensorJson> = ckpt
        .params
        .named()
        .into_iter()
        .map(|(name, t)| {
            (
                name,
                TensorJson {
                    shape: [t.rows(), t.cols()],
                    data: t.data().to_vec(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        meta: ckpt.meta.clone(),
        tensors,
    };
    let out = std::fs::File::create(path)
        .map_err(|e| TactError::io(path.display().to_string(), e))?;
    serde_json::to_writer(std::io::BufWriter::new(out), &file)
        .map_err(|e| TactError::Checkpoint(format!("failed to write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let input = std::fs::File::open(path)
        .map_err(|e| TactError::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_reader(std::io::BufReader::new(input))
        .map_err(|e| TactError::Checkpoint(format!("failed to parse {}: {e}", path.display())))?;
    let cfg = ModelConfig {
        dim: file.meta.dim,
        layers: file.meta.layers,
        hops: file.meta.hops,
        parts: ScoreParts::parse(&file.meta.parts)?,
        variant: ModelVariant::parse(&file.meta.variant)?,
    };
    let tensors: BTreeMap<String, Tensor> = file
        .tensors
        .into_iter()
        .map(|(name, t)| Ok((name, Tensor::from_vec(t.shape[0], t.shape[1], t.data)?)))
        .collect::<Result<_>>()?;
    let params = ModelParams::from_named(&cfg, file.meta.relations.len(), tensors)?;
    Ok(Checkpoint {
        meta: file.meta,
        params,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub loss_log: Vec<LossRecord>,
    /// Reflexive triples excluded from the positive pool.
    pub reflexive_skipped: usize,
    /// Validation AUC-PR per epoch when early stopping is active.
    pub validation_log: Vec<f64>,
}

fn extract_labeled(
    kg: &KnowledgeGraph,
    t: Triple,
    hops: usize,
    cap: usize,
    exclude: Option<EdgeId>,
) -> Result<EnclosingSubgraph> {
    Ok(extract_enclosing_subgraph(kg, t.head, t.tail, hops, exclude)?.labeled(cap))
}

/// Train on the fact graph. `valid` supplies held-out triples (over the
/// same vocabularies) for optional early stopping.
pub fn train(
    kg: &KnowledgeGraph,
    valid: Option<&[Triple]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if kg.num_triples() == 0 {
        return Err(TactError::Contract("cannot train on an empty graph".into()));
    }
    let rcg = build_rcg(kg);
    let needs_structure = config.model.parts.needs_structure();
    let cap = config.model.label_cap();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&config.model, kg.num_relations(), &mut rng);
    let mut adam = AdamState::new(&params);

    let positives: Vec<(EdgeId, Triple)> = kg
        .triples()
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_reflexive())
        .map(|(i, t)| (EdgeId(i), *t))
        .collect();
    let reflexive_skipped = kg.num_triples() - positives.len();
    if positives.is_empty() {
        return Err(TactError::Contract(
            "no irreflexive triples available for training".into(),
        ));
    }

    // Positive subgraphs repeat every epoch; extract them once.
    let pos_subs: Option<Vec<Arc<EnclosingSubgraph>>> = if needs_structure {
        let subs: Result<Vec<_>> = positives
            .par_iter()
            .map(|(edge, t)| {
                extract_labeled(kg, *t, config.model.hops, cap, Some(*edge)).map(Arc::new)
            })
            .collect();
        Some(subs?)
    } else {
        None
    };

    // Fixed validation pool: negatives drawn once so epochs are comparable.
    let validation = if config.early_stop {
        valid.and_then(|triples| {
            let vpos: Vec<Triple> = triples
                .iter()
                .copied()
                .filter(|t| !needs_structure || !t.is_reflexive())
                .collect();
            if vpos.is_empty() {
                return None;
            }
            let mut vrng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x76616c6964);
            let vneg: Result<Vec<Triple>> = vpos
                .iter()
                .map(|t| {
                    sample_negatives_irreflexive(kg, *t, 1, &mut vrng).map(|mut v| v.remove(0))
                })
                .collect();
            vneg.ok().map(|vneg| (vpos, vneg))
        })
    } else {
        None
    };

    let mut loss_log = Vec::new();
    let mut validation_log = Vec::new();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut rng);

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_err = |e: TactError| match e {
                TactError::Numeric(m) => {
                    TactError::Numeric(format!("epoch {epoch} batch {batch_idx}: {m}"))
                }
                other => other,
            };

            // A relation-corrupted negative keeps its positive's entity
            // pair and therefore shares its subgraph and pair context; an
            // entity-corrupted one needs its own.
            let mut negatives: Vec<(usize, Triple)> =
                Vec::with_capacity(chunk.len() * config.n_neg);
            for (slot, &i) in chunk.iter().enumerate() {
                for neg in sample_training_negatives(
                    kg,
                    positives[i].1,
                    config.n_neg,
                    config.rel_neg_prob,
                    &mut rng,
                )? {
                    negatives.push((slot, neg));
                }
            }

            let fresh: Vec<(usize, Triple)> = negatives
                .iter()
                .enumerate()
                .filter(|(_, (slot, neg))| {
                    let pos = positives[chunk[*slot]].1;
                    neg.head != pos.head || neg.tail != pos.tail
                })
                .map(|(j, (_, neg))| (j, *neg))
                .collect();
            let fresh_subs: Vec<Option<EnclosingSubgraph>> = if needs_structure {
                let subs: Result<Vec<_>> = fresh
                    .par_iter()
                    .map(|(_, t)| {
                        let exclude = kg.find_edge(t.head, t.rel, t.tail);
                        extract_labeled(kg, *t, config.model.hops, cap, exclude).map(Some)
                    })
                    .collect();
                subs.map_err(batch_err)?
            } else {
                vec![None; fresh.len()]
            };
            let mut neg_subs: Vec<Option<&EnclosingSubgraph>> = vec![None; negatives.len()];
            for ((j, _), sub) in fresh.iter().zip(&fresh_subs) {
                neg_subs[*j] = sub.as_ref();
            }

            let mut tape = Tape::new();
            let mut scorer = Scorer::new(&params, kg, &rcg, config.model, &mut tape);

            let mut pos_ids: Vec<TensorId> = Vec::with_capacity(chunk.len());
            let mut prepared_pairs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (edge, triple) = positives[i];
                let sub = pos_subs.as_ref().map(|s| s[i].as_ref());
                let prepared = scorer
                    .prepare_pair(&mut tape, triple.head, triple.tail, Some(edge), sub)
                    .map_err(batch_err)?;
                pos_ids.push(
                    scorer
                        .score_prepared(&mut tape, triple.rel, &prepared)
                        .map_err(batch_err)?,
                );
                prepared_pairs.push(prepared);
            }
            let mut neg_ids: Vec<TensorId> = Vec::with_capacity(negatives.len());
            for (j, (slot, neg)) in negatives.iter().enumerate() {
                let pos = positives[chunk[*slot]].1;
                let id = if neg.head == pos.head && neg.tail == pos.tail {
                    scorer
                        .score_prepared(&mut tape, neg.rel, &prepared_pairs[*slot])
                        .map_err(batch_err)?
                } else {
                    let exclude = kg.find_edge(neg.head, neg.rel, neg.tail);
                    scorer
                        .score_triple(&mut tape, *neg, exclude, neg_subs[j])
                        .map_err(batch_err)?
                };
                neg_ids.push(id);
            }

            let loss = hinge_loss(&mut tape, &pos_ids, &neg_ids, config.margin)
                .map_err(batch_err)?;
            let loss_value = tape.scalar_value(loss)?;
            let grads = tape.backward(loss).map_err(batch_err)?;
            let ordered = scorer.binding.ordered_ids();
            let grad_vecs: Vec<Vec<f64>> = ordered
                .iter()
                .map(|id| grads.get(*id).map(<[f64]>::to_vec).unwrap_or_default())
                .collect();
            adam_step(&mut params, &grad_vecs, &mut adam, config.lr).map_err(batch_err)?;

            loss_log.push(LossRecord {
                epoch,
                batch: batch_idx,
                loss: loss_value,
            });
        }

        if let Some((vpos, vneg)) = &validation {
            let evaluator = eval::Evaluator::with_rcg(kg, &rcg, &params, config.model);
            let pos_scores = evaluator.score_triples(vpos)?;
            let neg_scores = evaluator.score_triples(vneg)?;
            let auc = eval::auc_pr(&pos_scores, &neg_scores)?;
            validation_log.push(auc);
            if best.as_ref().is_none_or(|(b, _)| auc > *b) {
                best = Some((auc, params.clone()));
            }
        }
    }

    let final_params = match best {
        Some((_, p)) => p,
        None => params,
    };
    let meta = CheckpointMeta {
        dim: config.model.dim,
        layers: config.model.layers,
        hops: config.model.hops,
        parts: config.model.parts.label(),
        variant: config.model.variant.label().to_string(),
        margin: config.margin,
        seed: config.seed,
        relations: kg.relation_vocab().names().to_vec(),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            meta,
            params: final_params,
        },
        loss_log,
        reflexive_skipped,
        validation_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::build_graph;

    fn toy_kg() -> KnowledgeGraph {
        let raw: Vec<_> = [
            ("a", "r0", "b"),
            ("b", "r1", "c"),
            ("c", "r0", "d"),
            ("d", "r1", "a"),
            ("a", "r0", "c"),
        ]
        .iter()
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect();
        build_graph(&raw, None).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                dim: 4,
                layers: 1,
                hops: 2,
                ..Default::default()
            },
            lr: 0.01,
            batch_size: 4,
            epochs: 1,
            margin: 2.0,
            n_neg: 1,
            rel_neg_prob: 0.5,
            seed: 7,
            early_stop: false,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = small_config();
        let mut params = ModelParams::init(&cfg.model, 2, &mut rng);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let zeros: Vec<Vec<f64>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.data().len()])
            .collect();
        adam_step(&mut params, &zeros, &mut state, 0.01).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    /// One bias-corrected step against a constant gradient moves each
    /// coordinate by ~lr in the opposite direction.
    #[test]
    fn single_step_magnitude_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = small_config();
        let mut params = ModelParams::init(&cfg.model, 2, &mut rng);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        let grads: Vec<Vec<f64>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.5; t.data().len()])
            .collect();
        let lr = 0.01;
        adam_step(&mut params, &grads, &mut state, lr).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expect = lr * 0.5 / (0.5 + ADAM_EPS);
        for ((_, b), (_, a)) in before.named().iter().zip(params.named().iter()) {
            for (x, y) in b.data().iter().zip(a.data()) {
                assert!((x - y - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = small_config();
        let mut params = ModelParams::init(&cfg.model, 2, &mut rng);
        let mut state = AdamState::new(&params);
        let mut grads: Vec<Vec<f64>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.data().len()])
            .collect();
        grads[0][0] = f64::NAN;
        match adam_step(&mut params, &grads, &mut state, 0.01) {
            Err(TactError::Numeric(msg)) => assert!(msg.contains("`R`")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let kg = toy_kg();
        let cfg = small_config();
        let a = train(&kg, None, &cfg).unwrap();
        let b = train(&kg, None, &cfg).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.loss_log, b.loss_log);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let kg = toy_kg();
        let mut cfg = small_config();
        cfg.epochs = 0;
        let out = train(&kg, None, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = ModelParams::init(&cfg.model, kg.num_relations(), &mut rng);
        assert_eq!(out.checkpoint.params, init);
        assert!(out.loss_log.is_empty());
    }

    /// Direct before/after measurement: the hinge loss over a fixed batch
    /// of positives and negatives drops from initialization to the trained
    /// checkpoint.
    #[test]
    fn training_reduces_loss_on_a_fixed_batch() {
        let kg = toy_kg();
        let mut cfg = small_config();
        cfg.epochs = 4;
        cfg.batch_size = 8;

        let rcg = build_rcg(&kg);
        let positives: Vec<(EdgeId, Triple)> = kg
            .triples()
            .iter()
            .enumerate()
            .map(|(i, t)| (EdgeId(i), *t))
            .collect();
        let fixed_negatives: Vec<Triple> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            positives
                .iter()
                .map(|(_, t)| {
                    sample_training_negatives(&kg, *t, 1, 0.5, &mut rng).unwrap()[0]
                })
                .collect()
        };
        let batch_loss = |params: &ModelParams| -> f64 {
            let mut tape = Tape::new();
            let mut scorer = Scorer::new(params, &kg, &rcg, cfg.model, &mut tape);
            let cap = cfg.model.label_cap();
            let score = |scorer: &mut Scorer, tape: &mut Tape, t: &Triple, ex: Option<EdgeId>| {
                let sub = extract_labeled(&kg, *t, cfg.model.hops, cap, ex).unwrap();
                scorer.score_triple(tape, *t, ex, Some(&sub)).unwrap()
            };
            let pos: Vec<TensorId> = positives
                .iter()
                .map(|(e, t)| score(&mut scorer, &mut tape, t, Some(*e)))
                .collect();
            let neg: Vec<TensorId> = fixed_negatives
                .iter()
                .map(|t| {
                    let ex = kg.find_edge(t.head, t.rel, t.tail);
                    score(&mut scorer, &mut tape, t, ex)
                })
                .collect();
            let l = hinge_loss(&mut tape, &pos, &neg, cfg.margin).unwrap();
            tape.scalar_value(l).unwrap()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = ModelParams::init(&cfg.model, kg.num_relations(), &mut rng);
        let before = batch_loss(&init);
        let out = train(&kg, None, &cfg).unwrap();
        let after = batch_loss(&out.checkpoint.params);
        assert!(
            after < before,
            "loss did not decrease: before {before}, after {after}"
        );
    }

    #[test]
    fn reflexive_positives_are_skipped_and_counted() {
        let raw: Vec<_> = [("a", "r", "a"), ("a", "r", "b"), ("b", "r", "c")]
            .iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect();
        let kg = build_graph(&raw, None).unwrap();
        let out = train(&kg, None, &small_config()).unwrap();
        assert_eq!(out.reflexive_skipped, 1);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let kg = toy_kg();
        let out = train(&kg, None, &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&out.checkpoint, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.meta, out.checkpoint.meta);
        for ((n1, t1), (n2, t2)) in out
            .checkpoint
            .params
            .named()
            .iter()
            .zip(loaded.params.named().iter())
        {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "tensor {n1}");
            }
        }
    }

    #[test]
    fn mismatched_checkpoint_dim_is_rejected() {
        let kg = toy_kg();
        let out = train(&kg, None, &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&out.checkpoint, &path).unwrap();
        // Corrupt the metadata: claim a different width.
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.replace("\"dim\":4", "\"dim\":8");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TactError::Checkpoint(_))
        ));
    }

    #[test]
    fn early_stopping_tracks_best_validation_epoch() {
        let kg = toy_kg();
        let valid = vec![kg.triples()[0], kg.triples()[2]];
        let mut cfg = small_config();
        cfg.epochs = 3;
        cfg.early_stop = true;
        let out = train(&kg, Some(&valid), &cfg).unwrap();
        assert_eq!(out.validation_log.len(), 3);
    }
}
