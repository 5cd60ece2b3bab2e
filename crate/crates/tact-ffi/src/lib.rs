//! C ABI for the link-prediction engine.
//!
//! Handles are opaque pointers owned by the library; every constructor has
//! a matching `*_free`. Functions return [`TactStatus`]; on any non-OK
//! status `tact_last_error` yields a thread-local message describing what
//! went wrong. A session snapshots the model and fact graph it was created
//! from, so the originals may be freed immediately afterwards.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tact_core::error::TactError;
use tact_core::eval::{Evaluator, TripleSet};
use tact_core::kg::{self, KnowledgeGraph};
use tact_core::model::{ModelConfig, ModelVariant};
use tact_core::rcg::{build_rcg, RelationalCorrelationGraph};
use tact_core::scoring::ScoreParts;
use tact_core::training::{self, Checkpoint, TrainConfig};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TactStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Vocab = 5,
    Numeric = 6,
    Contract = 7,
    Config = 8,
    Checkpoint = 9,
    Index = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn status_of(err: &TactError) -> TactStatus {
    match err {
        TactError::Io { .. } => TactStatus::Io,
        TactError::Parse { .. } => TactStatus::Parse,
        TactError::Vocab(_) => TactStatus::Vocab,
        TactError::Numeric(_) => TactStatus::Numeric,
        TactError::Contract(_) => TactStatus::Contract,
        TactError::Config(_) => TactStatus::Config,
        TactError::Checkpoint(_) => TactStatus::Checkpoint,
        TactError::Index(_) => TactStatus::Index,
        TactError::Shape { .. } => TactStatus::Contract,
    }
}

fn guard(body: impl FnOnce() -> TactStatus) -> TactStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TactStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tact_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tact_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, TactStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(TactStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        TactStatus::InvalidUtf8
    })
}

/// Opaque fact graph handle.
pub struct TactGraph {
    graph: KnowledgeGraph,
}

/// Opaque trained-model handle.
pub struct TactModel {
    checkpoint: Checkpoint,
}

/// Opaque scoring session: a model bound to a fact graph.
pub struct TactSession {
    graph: KnowledgeGraph,
    rcg: RelationalCorrelationGraph,
    checkpoint: Checkpoint,
    config: ModelConfig,
    filter: TripleSet,
}

/// Load `<dir>/train.txt` as a fact graph with fresh vocabularies.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tact_graph_load_dir(
    dir: *const c_char,
    out: *mut *mut TactGraph,
) -> TactStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return TactStatus::NullArgument;
        }
        let dir = match cstr(dir) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match kg::load_triples(Path::new(dir).join("train.txt"))
            .and_then(|raw| kg::build_graph(&raw, None))
        {
            Ok(graph) => {
                *out = Box::into_raw(Box::new(TactGraph { graph }));
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `graph` must come from `tact_graph_load_dir` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tact_graph_free(graph: *mut TactGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tact_graph_num_entities(graph: *const TactGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_entities())
}

/// # Safety
/// `graph` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tact_graph_num_relations(graph: *const TactGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_relations())
}

/// # Safety
/// `graph` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tact_graph_num_triples(graph: *const TactGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_triples())
}

/// Training options. Zero/NULL fields fall back to the engine defaults
/// (dim 32, layers 2, hops 2, batch 16, epochs 10, one negative per
/// positive, lr 0.01, margin 8, relation-corruption probability 0.75,
/// parts "ngr", variant "full").
#[repr(C)]
#[derive(Clone, Copy)]
pub struct TactTrainOptions {
    pub dim: usize,
    pub layers: usize,
    pub hops: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_neg: usize,
    pub lr: f64,
    pub margin: f64,
    /// Negative, e.g. -1.0, keeps the default.
    pub rel_neg_prob: f64,
    pub seed: u64,
    /// Subset of "ngr"; NULL means "ngr".
    pub parts: *const c_char,
    /// One of "full", "base", "no-ra", "no-rc"; NULL means "full".
    pub variant: *const c_char,
}

unsafe fn train_config(opts: *const TactTrainOptions) -> Result<TrainConfig, TactStatus> {
    let mut config = TrainConfig::default();
    let Some(o) = opts.as_ref() else {
        return Ok(config);
    };
    if o.dim > 0 {
        config.model.dim = o.dim;
    }
    if o.layers > 0 {
        config.model.layers = o.layers;
    }
    if o.hops > 0 {
        config.model.hops = o.hops;
    }
    if o.epochs > 0 {
        config.epochs = o.epochs;
    }
    if o.batch_size > 0 {
        config.batch_size = o.batch_size;
    }
    if o.n_neg > 0 {
        config.n_neg = o.n_neg;
    }
    if o.lr > 0.0 {
        config.lr = o.lr;
    }
    if o.margin > 0.0 {
        config.margin = o.margin;
    }
    if o.rel_neg_prob >= 0.0 {
        config.rel_neg_prob = o.rel_neg_prob;
    }
    config.seed = o.seed;
    let fail = |e: TactError| {
        set_error(&e.to_string());
        status_of(&e)
    };
    if !o.parts.is_null() {
        config.model.parts = ScoreParts::parse(cstr(o.parts)?).map_err(fail)?;
    }
    if !o.variant.is_null() {
        config.model.variant = ModelVariant::parse(cstr(o.variant)?).map_err(fail)?;
    }
    Ok(config)
}

/// Train a model on a fact graph. `opts` may be NULL for defaults.
///
/// # Safety
/// `graph` must be a valid handle, `out` a valid pointer; `opts`, when
/// non-NULL, must point at a properly initialised options struct.
#[no_mangle]
pub unsafe extern "C" fn tact_train(
    graph: *const TactGraph,
    opts: *const TactTrainOptions,
    out: *mut *mut TactModel,
) -> TactStatus {
    guard(|| {
        let (Some(g), false) = (graph.as_ref(), out.is_null()) else {
            set_error("null graph or output pointer");
            return TactStatus::NullArgument;
        };
        let config = match train_config(opts) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match training::train(&g.graph, None, &config) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(TactModel {
                    checkpoint: outcome.checkpoint,
                }));
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `model` must come from `tact_train` or `tact_model_load`.
#[no_mangle]
pub unsafe extern "C" fn tact_model_free(model: *mut TactModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a valid handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tact_model_save(
    model: *const TactModel,
    path: *const c_char,
) -> TactStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            set_error("null model handle");
            return TactStatus::NullArgument;
        };
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match training::save_checkpoint(&m.checkpoint, path) {
            Ok(()) => TactStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tact_model_load(
    path: *const c_char,
    out: *mut *mut TactModel,
) -> TactStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return TactStatus::NullArgument;
        }
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match training::load_checkpoint(path) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(TactModel { checkpoint }));
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Bind a model to a fact graph for scoring. The graph is re-interned
/// against the model's relation vocabulary (every relation string in the
/// graph must be known to the model). Both inputs are snapshotted.
///
/// # Safety
/// `model` and `graph` must be valid handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tact_session_create(
    model: *const TactModel,
    graph: *const TactGraph,
    out: *mut *mut TactSession,
) -> TactStatus {
    guard(|| {
        let (Some(m), Some(g), false) = (model.as_ref(), graph.as_ref(), out.is_null()) else {
            set_error("null model, graph or output pointer");
            return TactStatus::NullArgument;
        };
        let build = || -> Result<TactSession, TactError> {
            let vocab = kg::Vocab::from_names(m.checkpoint.meta.relations.iter().cloned());
            let raw: Vec<kg::RawTriple> = g
                .graph
                .triples()
                .iter()
                .map(|t| {
                    (
                        g.graph.entity_vocab().name(t.head.0).unwrap().to_string(),
                        g.graph.relation_vocab().name(t.rel.0).unwrap().to_string(),
                        g.graph.entity_vocab().name(t.tail.0).unwrap().to_string(),
                    )
                })
                .collect();
            let graph = kg::build_graph(&raw, Some(&vocab))?;
            let rcg = build_rcg(&graph);
            let filter = TripleSet::from_triples(graph.triples());
            let config = m.checkpoint.model_config()?;
            Ok(TactSession {
                graph,
                rcg,
                checkpoint: m.checkpoint.clone(),
                config,
                filter,
            })
        };
        match build() {
            Ok(session) => {
                *out = Box::into_raw(Box::new(session));
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `session` must come from `tact_session_create`.
#[no_mangle]
pub unsafe extern "C" fn tact_session_free(session: *mut TactSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

impl TactSession {
    fn resolve(&self, head: &str, rel: &str, tail: &str) -> Result<kg::Triple, TactError> {
        let raw = vec![(head.to_string(), rel.to_string(), tail.to_string())];
        Ok(kg::resolve_triples(&self.graph, &raw)?[0])
    }

    fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::with_rcg(&self.graph, &self.rcg, &self.checkpoint.params, self.config)
    }
}

/// Score one triple (entity and relation given by name).
///
/// # Safety
/// `session` must be a valid handle, the strings NUL-terminated, and
/// `out_score` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tact_session_score(
    session: *const TactSession,
    head: *const c_char,
    rel: *const c_char,
    tail: *const c_char,
    out_score: *mut f64,
) -> TactStatus {
    guard(|| {
        let (Some(s), false) = (session.as_ref(), out_score.is_null()) else {
            set_error("null session or output pointer");
            return TactStatus::NullArgument;
        };
        let (head, rel, tail) = match (cstr(head), cstr(rel), cstr(tail)) {
            (Ok(h), Ok(r), Ok(t)) => (h, r, t),
            (Err(e), ..) | (_, Err(e), _) | (.., Err(e)) => return e,
        };
        match s
            .resolve(head, rel, tail)
            .and_then(|t| s.evaluator().score_triple(t))
        {
            Ok(score) => {
                *out_score = score;
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Filtered rank of `rel` among all candidate relations for the pair;
/// competing candidates stored as facts in the session graph are skipped.
///
/// # Safety
/// Same requirements as `tact_session_score`.
#[no_mangle]
pub unsafe extern "C" fn tact_session_relation_rank(
    session: *const TactSession,
    head: *const c_char,
    rel: *const c_char,
    tail: *const c_char,
    out_rank: *mut f64,
) -> TactStatus {
    guard(|| {
        let (Some(s), false) = (session.as_ref(), out_rank.is_null()) else {
            set_error("null session or output pointer");
            return TactStatus::NullArgument;
        };
        let (head, rel, tail) = match (cstr(head), cstr(rel), cstr(tail)) {
            (Ok(h), Ok(r), Ok(t)) => (h, r, t),
            (Err(e), ..) | (_, Err(e), _) | (.., Err(e)) => return e,
        };
        match s.resolve(head, rel, tail).and_then(|t| {
            s.evaluator()
                .relation_rank(&s.filter, t.head, t.tail, t.rel)
        }) {
            Ok(rank) => {
                *out_rank = rank;
                TactStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
