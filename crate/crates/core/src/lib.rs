#![allow(clippy::needless_range_loop)]

//! Sign-aware recommendation on signed bipartite graphs with
//! dual-frequency graph filtering.
//!
//! User feedback is modeled as a signed bipartite graph: positive edges
//! (likes, high ratings) and negative edges (dislikes, low ratings) over
//! the same user/item node set. Positive feedback behaves as a
//! low-frequency signal on the graph and negative feedback as a
//! high-frequency one, so the encoder runs a low-pass filter (augmented
//! GCN propagation) over the positive subgraph and a high-pass filter
//! (normalized Laplacian) over the negative subgraph, fusing the two per
//! layer. A signed-graph regularizer keeps the embedding table from
//! degenerating into a low-rank blob.
//!
//! The crate ships the full pipeline: dataset ingest, the signed graph
//! and its sparse operators, spectral analysis tooling (graph Fourier
//! transform, frequency histograms, filter kernel curves), the model with
//! exact reverse-mode gradients, an Adam trainer with early stopping and
//! binary checkpoints, ranking/classification metrics, representation
//! diagnostics, and the `dfgnn` CLI that wires it all together.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod losses;
pub mod mf;
pub mod model;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
