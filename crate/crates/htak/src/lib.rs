//! Hierarchical transitive-aligned graph kernel for un-attributed graphs.
//!
//! The similarity between two graphs is computed in four stages:
//!
//! 1. **Vertex embeddings** ([`db`]): each vertex gets a k-dimensional
//!    vector of Shannon entropies of its expansion subgraphs at radii
//!    1..k, under the degree-proportional stationary distribution.
//! 2. **Prototype hierarchies** ([`prototype`]): for every depth k, the
//!    embeddings of *all* graphs are quantized by repeated k-means into H
//!    shrinking levels of centroids.
//! 3. **Transitive alignment** ([`align`]): every vertex is assigned to
//!    its nearest prototype per level; vertices correspond exactly when
//!    they share one, so correspondence is transitive by construction.
//! 4. **Kernel assembly** ([`kernel`], [`pipeline`]): the kernel value of
//!    a graph pair counts commonly aligned vertex pairs over all levels,
//!    which equals a sum of inner products of per-graph assignment
//!    histograms and is therefore positive semidefinite.
//!
//! The Gram matrix over a collection can be exported as CSV or in
//! precomputed-kernel format for standard SVM tooling; [`eval`] provides a
//! PSD check and a 1-NN cross-validation baseline in kernel space.
//!
//! Determinism: every stage is seeded explicitly and reduced in fixed
//! order. Identical inputs and parameters give bit-identical Gram
//! matrices, independent of thread count and of vertex numbering inside
//! the input graphs.

pub mod align;
pub mod db;
pub mod error;
pub mod eval;
pub mod export;
pub mod graph;
pub mod kernel;
pub mod pipeline;
pub mod prototype;
pub mod tu;

pub use error::{Error, Result};
pub use graph::{Graph, GraphCollection};
pub use kernel::{htak_pair_direct, htak_pair_fast, GramMatrix, GramMode};
pub use pipeline::{Pipeline, PipelineParams};
pub use tu::{load_tu_dataset, save_tu_dataset, LoadStats};
