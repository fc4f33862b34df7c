//! The epoch loop: Adam on the train split, model selection on validation micro-f1.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{evaluate, Metrics};
use crate::dense::{Matrix, Real};
use crate::error::{Error, Result};
use crate::graph::{LabelTable, Split};
use crate::metapath::{PathKind, SemanticMatrix};
use crate::model::{
    adam_step, forward, init_params, input_specs, loss_and_grad, Mode, ModelParams, OptimizerState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub epoch_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    pub test_loss: f64,
    /// Mean wall-clock time of the optimisation steps in one epoch.
    pub epoch_ms_mean: f64,
    /// Time spent loading or computing the semantic matrices, filled in by the caller.
    pub precompute_ms: f64,
    pub metapaths: Vec<String>,
    pub num_parameters: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainReport {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.epoch_ms_mean = 0.0;
        r.precompute_ms = 0.0;
        for e in &mut r.history {
            e.epoch_ms = 0.0;
        }
        r
    }
}

/// Keeps the matrices within the configured hop bounds, in their given order.
pub fn select_inputs(matrices: &[SemanticMatrix], config: &RunConfig) -> Result<Vec<SemanticMatrix>> {
    let chosen: Vec<SemanticMatrix> = matrices
        .iter()
        .filter(|m| match m.metapath.kind() {
            PathKind::Feature => m.metapath.hops() <= config.max_hop_features,
            PathKind::Label => m.metapath.hops() <= config.max_hop_labels,
        })
        .cloned()
        .collect();
    if chosen.is_empty() {
        return Err(Error::Config(format!(
            "no semantic matrices within max_hop_features {} / max_hop_labels {}",
            config.max_hop_features, config.max_hop_labels
        )));
    }
    Ok(chosen)
}

/// Class probabilities for `rows`, without dropout.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
) -> Result<Matrix<T>> {
    Ok(forward(params, inputs, rows, Mode::Eval)?.0)
}

/// Metrics of `params` on one split.
pub fn evaluate_split<T: Real>(
    params: &ModelParams<T>,
    inputs: &[SemanticMatrix],
    labels: &LabelTable,
    split: Split,
) -> Result<Metrics> {
    let rows = labels.rows(split);
    if rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    evaluate(&predict(params, inputs, &rows)?, &labels.labels, &rows)
}

fn mix(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut z = seed
        .wrapping_add((epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((batch as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn batches(train_rows: &[usize], config: &RunConfig, epoch: usize) -> Vec<Vec<usize>> {
    if config.batch_size == 0 || config.batch_size >= train_rows.len() {
        return vec![train_rows.to_vec()];
    }
    let mut rows = train_rows.to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, epoch, usize::MAX)));
    rows.chunks(config.batch_size).map(|c| c.to_vec()).collect()
}

/// Fits a model on the matrices selected by `config` and returns the
/// parameters from the epoch with the best validation micro-f1.
pub fn train<T: Real>(
    matrices: &[SemanticMatrix],
    labels: &LabelTable,
    config: &RunConfig,
) -> Result<(ModelParams<T>, TrainReport)> {
    config.validate()?;
    let inputs = select_inputs(matrices, config)?;
    for m in &inputs {
        if m.matrix.rows() != labels.len() {
            return Err(Error::InputMismatch(format!(
                "metapath {} has {} rows but there are {} target nodes",
                m.metapath,
                m.matrix.rows(),
                labels.len()
            )));
        }
    }
    let train_rows = labels.rows(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let val_rows = labels.rows(Split::Val);
    let test_rows = labels.rows(Split::Test);
    if val_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptyMask);
    }

    let model_config = config.model_config(labels.num_classes);
    let mut params: ModelParams<T> = init_params(&model_config, &input_specs(&inputs), config.seed)?;
    let mut state = OptimizerState::new(config.adam(), &params);
    let mut best_params = params.clone();
    let mut best_val = evaluate(&predict(&params, &inputs, &val_rows)?, &labels.labels, &val_rows)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for (b, rows) in batches(&train_rows, config, epoch).iter().enumerate() {
            let mode = Mode::Train {
                seed: mix(config.seed, epoch, b),
            };
            let (loss, grads) = loss_and_grad(&params, &inputs, rows, &labels.labels, mode)?;
            adam_step(&mut params, &grads, &mut state)?;
            loss_sum += loss.as_f64() * rows.len() as f64;
        }
        let epoch_ms = start.elapsed().as_secs_f64() * 1e3;
        let train_loss = loss_sum / train_rows.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged(epoch));
        }

        let val = evaluate(&predict(&params, &inputs, &val_rows)?, &labels.labels, &val_rows)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_micro_f1: val.micro_f1,
            val_macro_f1: val.macro_f1,
            epoch_ms,
        });
        log::debug!(
            "epoch {epoch}: train loss {train_loss:.4}, val micro-f1 {:.4}",
            val.micro_f1
        );
        if best_epoch == 0 || val.micro_f1 > best_val.micro_f1 {
            best_val = val;
            best_epoch = epoch;
            best_params = params.clone();
        } else if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let test = evaluate(&predict(&best_params, &inputs, &test_rows)?, &labels.labels, &test_rows)?;
    let epoch_ms_mean = if history.is_empty() {
        0.0
    } else {
        history.iter().map(|e| e.epoch_ms).sum::<f64>() / history.len() as f64
    };
    let report = TrainReport {
        epochs: history.len(),
        best_epoch,
        val_micro_f1: best_val.micro_f1,
        val_macro_f1: best_val.macro_f1,
        test_micro_f1: test.micro_f1,
        test_macro_f1: test.macro_f1,
        test_loss: test.loss,
        epoch_ms_mean,
        precompute_ms: 0.0,
        metapaths: inputs.iter().map(|m| m.metapath.key()).collect(),
        num_parameters: best_params.num_parameters(),
        history,
    };
    Ok((best_params, report))
}
