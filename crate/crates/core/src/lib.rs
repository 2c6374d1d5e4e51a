//! Joint graph condensation: learn a small synthetic graph with few nodes and
//! few features from a large node-classification graph by matching per-class
//! GNN gradients, then check that GNNs trained on the small graph hold up on
//! the original.
//!
//! Module map:
//!
//! - [`graph_io`]: datasets, condensed graphs, normalization, synthetic SBM data
//! - [`tensor`]: dense `f64` matrices with a reverse-mode tape
//! - [`models`]: SGC backbone, feature condensers, link generator, eval trainers
//! - [`condense`]: the curriculum gradient-matching loop
//! - [`baselines`]: node-only and PCA two-stage condensation
//! - [`eval`]: evaluation protocol, graph statistics, reports
//! - [`cli`]: command-line entry point

pub mod baselines;
pub mod cli;
pub mod condense;
pub mod error;
pub mod eval;
pub mod graph_io;
pub mod models;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
