//! Heterogeneous-graph node classification with precomputed metapath
//! aggregation, label propagation and attention-based semantic fusion.
//!
//! The pipeline has two phases. [`metapath::precompute`] turns a
//! [`graph::HeteroGraph`] into a list of dense per-metapath
//! [`metapath::SemanticMatrix`] values, once. [`train::train`] then fits
//! the network in [`model`] on those matrices alone; training never sees
//! adjacency.

pub mod bench;
pub mod dense;
pub mod error;
pub mod exec;
pub mod graph;
pub mod metapath;
pub mod model;
pub mod sparse;
pub mod train;

pub use dense::{Matrix, Real};
pub use error::{Error, Result};
pub use exec::Execution;
pub use sparse::SparseMatrix;
