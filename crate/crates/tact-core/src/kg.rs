//! Triple ingestion, entity/relation interning and indexed graph access.
//!
//! Input files are UTF-8 TSV with one `head<TAB>relation<TAB>tail` fact per
//! line; empty lines and lines starting with `#` are ignored. A dataset
//! directory holds `train.txt`, `valid.txt` and `test.txt`; the inductive
//! test split lives in a sibling directory with its own fact graph
//! (`train.txt`) and target triples (`test.txt`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, TactError};

/// Dense entity identifier, assigned in first-seen order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EntityId(pub usize);

/// Dense relation identifier, assigned in first-seen order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct RelationId(pub usize);

/// Position of a triple in the owning graph's triple list.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EdgeId(pub usize);

/// A directed, relation-labelled fact.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Triple {
    pub head: EntityId,
    pub rel: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, rel: RelationId, tail: EntityId) -> Self {
        Triple { head, rel, tail }
    }

    /// A triple with `head == tail`.
    pub fn is_reflexive(&self) -> bool {
        self.head == self.tail
    }
}

/// Bidirectional string <-> dense-id map with first-seen ordering.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::default()
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let mut v = Vocab::new();
        for n in names {
            v.intern(&n);
        }
        v
    }

    /// Id for `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        match self.ids.get(name) {
            Some(&id) => id,
            None => {
                let id = self.names.len();
                self.names.push(name.to_string());
                self.ids.insert(name.to_string(), id);
                id
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Names in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Immutable triple store with head/tail/relation incidence indices.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    by_head: Vec<Vec<EdgeId>>,
    by_tail: Vec<Vec<EdgeId>>,
    by_rel: Vec<Vec<EdgeId>>,
    entity_vocab: Vocab,
    relation_vocab: Vocab,
}

impl KnowledgeGraph {
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, edge: EdgeId) -> Option<&Triple> {
        self.triples.get(edge.0)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_vocab.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_vocab.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entity_vocab(&self) -> &Vocab {
        &self.entity_vocab
    }

    pub fn relation_vocab(&self) -> &Vocab {
        &self.relation_vocab
    }

    /// Edges with `node` as head.
    pub fn edges_by_head(&self, node: EntityId) -> &[EdgeId] {
        &self.by_head[node.0]
    }

    /// Edges with `node` as tail.
    pub fn edges_by_tail(&self, node: EntityId) -> &[EdgeId] {
        &self.by_tail[node.0]
    }

    /// Edges carrying relation `rel`.
    pub fn edges_by_rel(&self, rel: RelationId) -> &[EdgeId] {
        &self.by_rel[rel.0]
    }

    /// All edges touching `node` (head or tail side), deduplicated and
    /// sorted by edge id.
    pub fn incident_edges(&self, node: EntityId) -> Result<Vec<EdgeId>> {
        if node.0 >= self.num_entities() {
            return Err(TactError::Index(format!(
                "entity {} out of range (|E| = {})",
                node.0,
                self.num_entities()
            )));
        }
        let mut edges: Vec<EdgeId> = self.by_head[node.0]
            .iter()
            .chain(self.by_tail[node.0].iter())
            .copied()
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Ok(edges)
    }

    /// Edge id of `(head, rel, tail)` if that exact fact is stored. When the
    /// fact is duplicated, the first occurrence wins.
    pub fn find_edge(&self, head: EntityId, rel: RelationId, tail: EntityId) -> Option<EdgeId> {
        self.by_head
            .get(head.0)?
            .iter()
            .copied()
            .find(|e| {
                let t = &self.triples[e.0];
                t.rel == rel && t.tail == tail
            })
    }

    /// Per-relation triple counts, indexed by relation id.
    pub fn relation_counts(&self) -> Vec<usize> {
        self.by_rel.iter().map(Vec::len).collect()
    }
}

/// Raw string triple as read from a TSV file.
pub type RawTriple = (String, String, String);

/// Read `head<TAB>relation<TAB>tail` lines in file order. Empty lines and
/// `#`-prefixed lines are skipped; no deduplication is applied.
pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<RawTriple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TactError::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) => {
                out.push((h.to_string(), r.to_string(), t.to_string()))
            }
            _ => {
                return Err(TactError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!(
                        "expected 3 tab-separated fields, got {}",
                        line.split('\t').count()
                    ),
                })
            }
        }
    }
    Ok(out)
}

/// Build an indexed graph from raw triples.
///
/// Entities are always interned fresh in first-seen order. When
/// `frozen_relations` is given, every relation string must already be known
/// (the inductive protocol shares relations between train and test but not
/// entities); an unknown relation is a vocabulary error. Duplicate triples
/// are retained.
pub fn build_graph(raw: &[RawTriple], frozen_relations: Option<&Vocab>) -> Result<KnowledgeGraph> {
    let mut entity_vocab = Vocab::new();
    let mut relation_vocab = frozen_relations.cloned().unwrap_or_default();
    let frozen = frozen_relations.is_some();

    let mut triples = Vec::with_capacity(raw.len());
    for (h, r, t) in raw {
        let rel = if frozen {
            match relation_vocab.get(r) {
                Some(id) => id,
                None => {
                    return Err(TactError::Vocab(format!(
                        "relation `{r}` not present in the frozen relation vocabulary"
                    )))
                }
            }
        } else {
            relation_vocab.intern(r)
        };
        let head = entity_vocab.intern(h);
        let tail = entity_vocab.intern(t);
        triples.push(Triple::new(EntityId(head), RelationId(rel), EntityId(tail)));
    }

    let mut by_head = vec![Vec::new(); entity_vocab.len()];
    let mut by_tail = vec![Vec::new(); entity_vocab.len()];
    let mut by_rel = vec![Vec::new(); relation_vocab.len()];
    for (i, t) in triples.iter().enumerate() {
        by_head[t.head.0].push(EdgeId(i));
        by_tail[t.tail.0].push(EdgeId(i));
        by_rel[t.rel.0].push(EdgeId(i));
    }

    Ok(KnowledgeGraph {
        triples,
        by_head,
        by_tail,
        by_rel,
        entity_vocab,
        relation_vocab,
    })
}

/// Intern raw triples against an existing graph's vocabularies without
/// extending them. Used for evaluation queries over a fact graph.
pub fn resolve_triples(kg: &KnowledgeGraph, raw: &[RawTriple]) -> Result<Vec<Triple>> {
    raw.iter()
        .map(|(h, r, t)| {
            let head = kg
                .entity_vocab()
                .get(h)
                .ok_or_else(|| TactError::Vocab(format!("unknown entity `{h}`")))?;
            let rel = kg
                .relation_vocab()
                .get(r)
                .ok_or_else(|| TactError::Vocab(format!("unknown relation `{r}`")))?;
            let tail = kg
                .entity_vocab()
                .get(t)
                .ok_or_else(|| TactError::Vocab(format!("unknown entity `{t}`")))?;
            Ok(Triple::new(EntityId(head), RelationId(rel), EntityId(tail)))
        })
        .collect()
}

/// The three standard files of a dataset directory. `valid` and `test` are
/// optional on disk.
#[derive(Debug, Default)]
pub struct DatasetDir {
    pub train: Vec<RawTriple>,
    pub valid: Option<Vec<RawTriple>>,
    pub test: Option<Vec<RawTriple>>,
}

pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<DatasetDir> {
    let dir = dir.as_ref();
    let train_path = dir.join("train.txt");
    if !train_path.exists() {
        return Err(TactError::io(
            train_path.display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing train.txt"),
        ));
    }
    let load_opt = |name: &str| -> Result<Option<Vec<RawTriple>>> {
        let p = dir.join(name);
        if p.exists() {
            Ok(Some(load_triples(&p)?))
        } else {
            Ok(None)
        }
    };
    Ok(DatasetDir {
        train: load_triples(&train_path)?,
        valid: load_opt("valid.txt")?,
        test: load_opt("test.txt")?,
    })
}
