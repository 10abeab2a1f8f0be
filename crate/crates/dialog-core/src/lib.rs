//! End-to-end task-oriented dialogue model: attention-based belief
//! tracker, feedforward policy over database query results, and a
//! semantically-conditioned LSTM generator, trained jointly with
//! optional semi-supervised regimes (pseudo-labelling and a
//! consistency-regularization Pi-model) under varying amounts of
//! turn-level state annotation.

pub mod corpus;
pub mod dst;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kb;
pub mod model;
pub mod neural;
pub mod policy;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
