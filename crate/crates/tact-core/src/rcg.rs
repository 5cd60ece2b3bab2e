//! Topological patterns between edge pairs and the relation-level
//! correlation graph built from them.
//!
//! Two distinct irreflexive edges can share endpoints in exactly seven ways.
//! Six of them connect the edges (`H-T`, `T-T`, `H-H`, `T-H`, `PARA`,
//! `LOOP`); the seventh (`NC`) is the absence of any shared endpoint and is
//! never stored. For every target relation the correlation graph records,
//! per connected pattern, the set of relations that reach it that way.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, TactError};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};

/// Number of connected patterns (everything but `NC`).
pub const CONNECTED_PATTERNS: usize = 6;

/// How a neighbour edge shares endpoints with a target edge.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Pattern {
    /// Neighbour head = target tail.
    HeadTail,
    /// Neighbour tail = target tail.
    TailTail,
    /// Neighbour head = target head.
    HeadHead,
    /// Neighbour tail = target head.
    TailHead,
    /// Both endpoints shared, same orientation.
    Parallel,
    /// Both endpoints shared, opposite orientation.
    Loop,
    /// No shared endpoint.
    NotConnected,
}

impl Pattern {
    pub const CONNECTED: [Pattern; CONNECTED_PATTERNS] = [
        Pattern::HeadTail,
        Pattern::TailTail,
        Pattern::HeadHead,
        Pattern::TailHead,
        Pattern::Parallel,
        Pattern::Loop,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Pattern::HeadTail => "H-T",
            Pattern::TailTail => "T-T",
            Pattern::HeadHead => "H-H",
            Pattern::TailHead => "T-H",
            Pattern::Parallel => "PARA",
            Pattern::Loop => "LOOP",
            Pattern::NotConnected => "NC",
        }
    }

    /// Index of a connected pattern into per-pattern parameter arrays.
    pub fn index(self) -> Option<usize> {
        Pattern::CONNECTED.iter().position(|p| *p == self)
    }

    pub fn from_index(idx: usize) -> Option<Pattern> {
        Pattern::CONNECTED.get(idx).copied()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pattern {
    type Err = TactError;

    fn from_str(s: &str) -> Result<Pattern> {
        Pattern::CONNECTED
            .iter()
            .chain(std::iter::once(&Pattern::NotConnected))
            .copied()
            .find(|p| p.label() == s)
            .ok_or_else(|| TactError::Config(format!("unknown pattern `{s}`")))
    }
}

/// Classify how `neighbor` shares endpoints with `target`.
///
/// Both edges must be irreflexive; the caller guarantees they are distinct
/// edge instances (two parallel edges over the same endpoints are valid
/// input and classify as `PARA`).
pub fn classify_pattern(
    neighbor: (EntityId, EntityId),
    target: (EntityId, EntityId),
) -> Result<Pattern> {
    let (hn, tn) = neighbor;
    let (ht, tt) = target;
    if hn == tn || ht == tt {
        return Err(TactError::Contract(
            "classify_pattern requires irreflexive edges".into(),
        ));
    }
    let p = if hn == ht && tn == tt {
        Pattern::Parallel
    } else if hn == tt && tn == ht {
        Pattern::Loop
    } else if hn == ht {
        Pattern::HeadHead
    } else if hn == tt {
        Pattern::HeadTail
    } else if tn == ht {
        Pattern::TailHead
    } else if tn == tt {
        Pattern::TailTail
    } else {
        Pattern::NotConnected
    };
    Ok(p)
}

/// Relation-level view of the graph: for each target relation and connected
/// pattern, the set of relations adjacent that way.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationalCorrelationGraph {
    /// `indicators[t][p]` = sorted neighbour relation ids for target `t`
    /// under connected pattern `p`.
    indicators: Vec<[Vec<usize>; CONNECTED_PATTERNS]>,
    relation_count: usize,
    reflexive_skipped: usize,
}

impl RelationalCorrelationGraph {
    /// Assemble a correlation graph directly from per-target indicator
    /// sets (one array of six neighbour lists per relation). Lists are
    /// sorted and deduplicated; ids must stay below the relation count.
    pub fn from_indicator_sets(
        indicators: Vec<[Vec<usize>; CONNECTED_PATTERNS]>,
    ) -> Result<RelationalCorrelationGraph> {
        let nr = indicators.len();
        let mut cleaned = Vec::with_capacity(nr);
        for row in indicators {
            let mut out: [Vec<usize>; CONNECTED_PATTERNS] = Default::default();
            for (i, mut bucket) in row.into_iter().enumerate() {
                if let Some(&bad) = bucket.iter().find(|&&n| n >= nr) {
                    return Err(TactError::Index(format!(
                        "indicator id {bad} out of range (|R| = {nr})"
                    )));
                }
                bucket.sort_unstable();
                bucket.dedup();
                out[i] = bucket;
            }
            cleaned.push(out);
        }
        Ok(RelationalCorrelationGraph {
            indicators: cleaned,
            relation_count: nr,
            reflexive_skipped: 0,
        })
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    /// Edges (reflexive triples) that were skipped during construction.
    pub fn reflexive_skipped(&self) -> usize {
        self.reflexive_skipped
    }

    /// Sorted neighbour ids of target `t` under pattern `p`.
    pub fn indicator_set(&self, t: RelationId, p: Pattern) -> &[usize] {
        match p.index() {
            Some(idx) => &self.indicators[t.0][idx],
            None => &[],
        }
    }

    /// Union of all six indicator sets for `t`, sorted.
    pub fn neighbor_union(&self, t: RelationId) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for bucket in &self.indicators[t.0] {
            set.extend(bucket.iter().copied());
        }
        set.into_iter().collect()
    }

    /// Total indicator entries per pattern, in `Pattern::CONNECTED` order.
    pub fn pattern_histogram(&self) -> [usize; CONNECTED_PATTERNS] {
        let mut h = [0usize; CONNECTED_PATTERNS];
        for row in &self.indicators {
            for (i, bucket) in row.iter().enumerate() {
                h[i] += bucket.len();
            }
        }
        h
    }
}

/// Build the correlation graph by joining edges through shared entities.
///
/// For every ordered pair of distinct irreflexive edges that share an
/// entity, the neighbour's relation is recorded in the target relation's
/// indicator set under the classified pattern. Self-correlations between
/// two edges of the same relation are kept; reflexive edges are skipped
/// and counted. `NC` pairs never meet in the join and stay implicit.
pub fn build_rcg(kg: &KnowledgeGraph) -> RelationalCorrelationGraph {
    let nr = kg.num_relations();
    let mut sets: Vec<[BTreeSet<usize>; CONNECTED_PATTERNS]> =
        (0..nr).map(|_| Default::default()).collect();

    let mut reflexive = BTreeSet::new();
    for node in 0..kg.num_entities() {
        let node = EntityId(node);
        let bucket = kg
            .incident_edges(node)
            .expect("node id ranges over |E|");
        for &e_n in &bucket {
            let tn = kg.triple(e_n).unwrap();
            if tn.is_reflexive() {
                reflexive.insert(e_n);
                continue;
            }
            for &e_t in &bucket {
                if e_t == e_n {
                    continue;
                }
                let tt = kg.triple(e_t).unwrap();
                if tt.is_reflexive() {
                    continue;
                }
                let p = classify_pattern((tn.head, tn.tail), (tt.head, tt.tail))
                    .expect("edges checked irreflexive");
                if let Some(idx) = p.index() {
                    sets[tt.rel.0][idx].insert(tn.rel.0);
                }
            }
        }
    }
    // Reflexive edges not incident to anything else still need counting.
    for (i, t) in kg.triples().iter().enumerate() {
        if t.is_reflexive() {
            reflexive.insert(crate::kg::EdgeId(i));
        }
    }

    RelationalCorrelationGraph {
        indicators: sets
            .into_iter()
            .map(|row| row.map(|s| s.into_iter().collect()))
            .collect(),
        relation_count: nr,
        reflexive_skipped: reflexive.len(),
    }
}

/// Write the correlation graph as sorted TSV rows
/// `target_rel<TAB>pattern<TAB>neighbor_rel`, using vocabulary names.
pub fn export_rcg(
    rcg: &RelationalCorrelationGraph,
    vocab: &crate::kg::Vocab,
    mut out: impl Write,
) -> Result<()> {
    for t in 0..rcg.relation_count {
        for p in Pattern::CONNECTED {
            for &n in rcg.indicator_set(RelationId(t), p) {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    vocab.name(t).unwrap_or("?"),
                    p.label(),
                    vocab.name(n).unwrap_or("?")
                )
                .map_err(|e| TactError::io("<rcg export>", e))?;
            }
        }
    }
    Ok(())
}

pub fn export_rcg_to_path(
    rcg: &RelationalCorrelationGraph,
    vocab: &crate::kg::Vocab,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path)
        .map_err(|e| TactError::io(path.display().to_string(), e))?;
    export_rcg(rcg, vocab, std::io::BufWriter::new(f))
}

/// Parse rows produced by [`export_rcg`] back into `(target, pattern,
/// neighbor)` id triples.
pub fn parse_rcg_export(text: &str, vocab: &crate::kg::Vocab) -> Result<Vec<(usize, Pattern, usize)>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let mut f = line.split('\t');
            match (f.next(), f.next(), f.next()) {
                (Some(t), Some(p), Some(n)) => {
                    let t = vocab
                        .get(t)
                        .ok_or_else(|| TactError::Vocab(format!("unknown relation `{t}`")))?;
                    let n = vocab
                        .get(n)
                        .ok_or_else(|| TactError::Vocab(format!("unknown relation `{n}`")))?;
                    Ok((t, p.parse()?, n))
                }
                _ => Err(TactError::Parse {
                    path: "<rcg export>".into(),
                    line: i + 1,
                    message: "expected 3 tab-separated fields".into(),
                }),
            }
        })
        .collect()
}
