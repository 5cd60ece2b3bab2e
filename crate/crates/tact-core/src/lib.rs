//! Inductive knowledge-graph link prediction with topology-aware relation
//! correlations.
//!
//! The engine scores a candidate triple `(u, r, v)` from two sources of
//! evidence that are both independent of entity identity:
//!
//! * a relation embedding refined by how `r` is topologically connected to
//!   its neighbouring relations ([`rcg`], [`rcn`]), and
//! * an encoding of the enclosing subgraph around `u` and `v`
//!   ([`subgraph`], [`gsn`]).
//!
//! Both parts feed a linear scoring head ([`scoring`]) trained with a margin
//! loss ([`training`]) and evaluated with AUC-PR and filtered relation
//! ranking ([`eval`]). All numeric work runs on a small reverse-mode tape
//! ([`tensor`]).

pub mod error;
pub mod eval;
pub mod gsn;
pub mod kg;
pub mod model;
pub mod rcg;
pub mod rcn;
pub mod scoring;
pub mod subgraph;
pub mod tensor;
pub mod training;

pub use error::{Result, TactError};
