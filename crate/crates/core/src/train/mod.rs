//! Training loop, run configuration and evaluation metrics.

mod config;
mod metrics;
mod trainer;

pub use config::{Precision, RunConfig, CONFIG_KEYS};
pub use metrics::{argmax, evaluate, Metrics};
pub use trainer::{
    evaluate_split, predict, select_inputs, train, EpochRecord, TrainReport,
};
