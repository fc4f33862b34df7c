//! Typed heterogeneous graph storage, dataset I/O and the synthetic
//! planted-signal generator.

mod hetero;
pub mod io;
mod schema;
pub mod synth;

pub use hetero::{FeatureTable, HeteroGraph, LabelTable, Split};
pub use io::{load_graph, write_graph, FeatureFormat};
pub use schema::{initial as schema_initial, NodeType, Relation, Schema};
pub use synth::{gen_synthetic, SynthConfig, SynthRelation, SynthType};
