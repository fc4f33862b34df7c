//! Metapath enumeration and precomputation of semantic matrices.

mod oracle;
mod path;
mod propagate;
pub mod store;

pub use oracle::{oracle_aggregate, ORACLE_MAX_HOP};
pub use path::{
    enumerate_feature_metapaths, enumerate_label_metapaths, Metapath, MetapathSet, PathKind,
};
pub use propagate::{
    precompute, propagate_features, propagate_features_with, propagate_labels,
    propagate_labels_with, PropagateOptions, SemanticMatrix,
};
