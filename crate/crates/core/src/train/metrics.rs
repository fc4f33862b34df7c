//! Classification metrics over a masked set of nodes.

use serde::{Deserialize, Serialize};

use crate::dense::{Matrix, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Mean negative log-likelihood of the true class.
    pub loss: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores predictions for the nodes in `mask`. Row `r` of `probabilities`
/// belongs to node `mask[r]`.
pub fn evaluate<T: Real>(
    probabilities: &Matrix<T>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if probabilities.rows() != mask.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for a mask of {} nodes",
            probabilities.rows(),
            mask.len()
        )));
    }
    let classes = probabilities.cols();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut nll = 0.0;
    for (r, &node) in mask.iter().enumerate() {
        let truth = labels
            .get(node)
            .copied()
            .flatten()
            .ok_or(Error::UnlabeledRow(node))?;
        if truth >= classes {
            return Err(Error::ClassOutOfRange {
                node,
                class: truth,
                num_classes: classes,
            });
        }
        let row = probabilities.row(r);
        confusion[truth][argmax(row)] += 1;
        nll -= row[truth].as_f64().max(f64::MIN_POSITIVE).ln();
    }

    let total = mask.len() as f64;
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let mut precision = vec![0.0; classes];
    let mut recall = vec![0.0; classes];
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..classes).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        if predicted > 0 {
            precision[c] = tp / predicted as f64;
        }
        if actual > 0 {
            recall[c] = tp / actual as f64;
        }
        if predicted + actual > 0 {
            f1_sum += 2.0 * tp / (predicted + actual) as f64;
        }
    }
    Ok(Metrics {
        micro_f1: correct as f64 / total,
        macro_f1: f1_sum / classes as f64,
        loss: nll / total,
        precision,
        recall,
        confusion,
    })
}
