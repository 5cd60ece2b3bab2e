//! Triple scoring head, margin loss, and negative sampling.

use rand::Rng;

use crate::error::{Result, TactError};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::tensor::{Tape, TensorId};

/// Which embedding blocks feed the scoring head: `n` (target node pair,
/// width `2d`), `g` (pooled subgraph, width `d`), `r` (final relation
/// embedding, width `d`). Parsed from strings like `"ngr"` or `"r"`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ScoreParts {
    pub use_n: bool,
    pub use_g: bool,
    pub use_r: bool,
}

impl ScoreParts {
    pub fn parse(s: &str) -> Result<ScoreParts> {
        let mut parts = ScoreParts {
            use_n: false,
            use_g: false,
            use_r: false,
        };
        for c in s.chars() {
            let flag = match c {
                'n' => &mut parts.use_n,
                'g' => &mut parts.use_g,
                'r' => &mut parts.use_r,
                other => {
                    return Err(TactError::Config(format!(
                        "unknown score part `{other}` (expected a subset of n, g, r)"
                    )))
                }
            };
            if *flag {
                return Err(TactError::Config(format!("duplicate score part `{c}`")));
            }
            *flag = true;
        }
        if !(parts.use_n || parts.use_g || parts.use_r) {
            return Err(TactError::Config("score parts must not be empty".into()));
        }
        Ok(parts)
    }

    /// Canonical `n`, `g`, `r` subset string.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.use_n {
            s.push('n');
        }
        if self.use_g {
            s.push('g');
        }
        if self.use_r {
            s.push('r');
        }
        s
    }

    /// Width of the concatenated scoring input.
    pub fn width(&self, dim: usize) -> usize {
        dim * usize::from(self.use_r) + dim * usize::from(self.use_g)
            + 2 * dim * usize::from(self.use_n)
    }

    /// Whether subgraph encoding is needed at all.
    pub fn needs_structure(&self) -> bool {
        self.use_n || self.use_g
    }
}

impl std::fmt::Display for ScoreParts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Concatenate the active blocks in fixed `(r, g, n)` order and project to a
/// scalar with the weight column.
pub fn score(
    tape: &mut Tape,
    parts: ScoreParts,
    r_final: Option<TensorId>,
    e_graph: Option<TensorId>,
    e_head: Option<TensorId>,
    e_tail: Option<TensorId>,
    score_weight: TensorId,
) -> Result<TensorId> {
    let mut blocks: Vec<TensorId> = Vec::new();
    let missing = |name: &str| TactError::Contract(format!("score part `{name}` required but absent"));
    if parts.use_r {
        blocks.push(r_final.ok_or_else(|| missing("r"))?);
    }
    if parts.use_g {
        blocks.push(e_graph.ok_or_else(|| missing("g"))?);
    }
    if parts.use_n {
        blocks.push(e_head.ok_or_else(|| missing("n"))?);
        blocks.push(e_tail.ok_or_else(|| missing("n"))?);
    }
    let mut cat = blocks[0];
    for b in &blocks[1..] {
        cat = tape.concat_cols(cat, *b)?;
    }
    tape.matmul(cat, score_weight)
}

/// Noise-contrastive hinge loss: the sum over every (positive, negative)
/// pair of `max(0, f(neg) - f(pos) + margin)`. Negatives are grouped per
/// positive: `neg[j*n .. (j+1)*n]` corrupts `pos[j]`.
pub fn hinge_loss(
    tape: &mut Tape,
    pos: &[TensorId],
    neg: &[TensorId],
    margin: f64,
) -> Result<TensorId> {
    if pos.is_empty() {
        return Err(TactError::Contract("hinge_loss needs at least one positive".into()));
    }
    if neg.len() % pos.len() != 0 {
        return Err(TactError::Contract(format!(
            "negative group size mismatch: {} negatives for {} positives",
            neg.len(),
            pos.len()
        )));
    }
    if neg.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let n = neg.len() / pos.len();
    let margin_term = tape.scalar(margin);
    let mut total: Option<TensorId> = None;
    for (j, &p) in pos.iter().enumerate() {
        let neg_p = tape.scale(p, -1.0)?;
        for &q in &neg[j * n..(j + 1) * n] {
            let diff = tape.add(q, neg_p)?;
            let shifted = tape.add(diff, margin_term)?;
            let term = tape.relu(shifted)?;
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
    }
    Ok(total.unwrap())
}

/// Corrupt `triple` `n` times: a fair coin picks head or tail, and the
/// chosen slot is replaced by a uniform entity different from its original
/// value. The relation never changes and no filtering against known facts
/// is applied.
pub fn sample_negatives(
    kg: &KnowledgeGraph,
    triple: Triple,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let ne = kg.num_entities();
    if ne < 2 {
        return Err(TactError::Contract(
            "negative sampling needs at least two entities".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let corrupt_head = rng.gen_bool(0.5);
        let original = if corrupt_head { triple.head } else { triple.tail };
        let replacement = loop {
            let e = EntityId(rng.gen_range(0..ne));
            if e != original {
                break e;
            }
        };
        out.push(if corrupt_head {
            Triple::new(replacement, triple.rel, triple.tail)
        } else {
            Triple::new(triple.head, triple.rel, replacement)
        });
    }
    Ok(out)
}

/// Like [`sample_negatives`] but redraws corruptions that would produce a
/// reflexive triple, which the subgraph extractor cannot score. With only
/// two entities no such redraw is possible and the literal draw is kept.
pub fn sample_negatives_irreflexive(
    kg: &KnowledgeGraph,
    triple: Triple,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let ne = kg.num_entities();
    if ne < 2 {
        return Err(TactError::Contract(
            "negative sampling needs at least two entities".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let corrupt_head = rng.gen_bool(0.5);
        let (original, other) = if corrupt_head {
            (triple.head, triple.tail)
        } else {
            (triple.tail, triple.head)
        };
        let avoid_other = ne > 2 || original == other;
        let replacement = loop {
            let e = EntityId(rng.gen_range(0..ne));
            if e != original && (!avoid_other || e != other) {
                break e;
            }
        };
        out.push(if corrupt_head {
            Triple::new(replacement, triple.rel, triple.tail)
        } else {
            Triple::new(triple.head, triple.rel, replacement)
        });
    }
    Ok(out)
}

/// Training-time corruption: with probability `rel_prob` the relation is
/// replaced by a uniform different relation (keeping the entity pair, so
/// the model learns to tell relations apart over a fixed context);
/// otherwise an endpoint is corrupted as in
/// [`sample_negatives_irreflexive`]. Falls back to entity corruption when
/// the vocabulary has a single relation.
pub fn sample_training_negatives(
    kg: &KnowledgeGraph,
    triple: Triple,
    n: usize,
    rel_prob: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Triple>> {
    let nr = kg.num_relations();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if nr > 1 && rng.gen_bool(rel_prob) {
            let replacement = loop {
                let r = RelationId(rng.gen_range(0..nr));
                if r != triple.rel {
                    break r;
                }
            };
            out.push(Triple::new(triple.head, replacement, triple.tail));
        } else {
            out.extend(sample_negatives_irreflexive(kg, triple, 1, rng)?);
        }
    }
    Ok(out)
}
