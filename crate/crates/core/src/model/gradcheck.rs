//! Central finite-difference verification of the analytic backward pass.

use super::network::{loss, loss_and_grad, Mode};
use super::params::{Gradients, ModelParams};
use crate::error::Result;
use crate::metapath::SemanticMatrix;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Max over parameter tensors of `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`.
pub fn grad_check(
    params: &ModelParams<f64>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
) -> Result<f64> {
    grad_check_with_step(params, inputs, rows, labels, DEFAULT_STEP)
}

pub fn grad_check_with_step(
    params: &ModelParams<f64>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
    step: f64,
) -> Result<f64> {
    let (_, analytic) = loss_and_grad(params, inputs, rows, labels, Mode::Eval)?;
    compare_gradients(params, inputs, rows, labels, &analytic, step)
}

/// Compares externally supplied gradients against finite differences.
pub fn compare_gradients(
    params: &ModelParams<f64>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
    analytic: &Gradients<f64>,
    step: f64,
) -> Result<f64> {
    let numeric = numeric_gradients(params, inputs, rows, labels, step)?;
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.tensors().into_iter().zip(numeric.tensors()) {
        let mut diff = 0.0;
        let mut na = 0.0;
        let mut nn = 0.0;
        for (&x, &y) in a.as_slice().iter().zip(n.as_slice()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
        let denom = na.sqrt() + nn.sqrt();
        if denom > 0.0 {
            worst = worst.max(diff.sqrt() / denom);
        }
    }
    Ok(worst)
}

pub fn numeric_gradients(
    params: &ModelParams<f64>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
    step: f64,
) -> Result<Gradients<f64>> {
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].as_slice().len();
        for i in 0..len {
            let orig = params.tensors()[t].as_slice()[i];
            probe.tensors_mut()[t].as_mut_slice()[i] = orig + step;
            let up = loss(&probe, inputs, rows, labels, Mode::Eval)?;
            probe.tensors_mut()[t].as_mut_slice()[i] = orig - step;
            let down = loss(&probe, inputs, rows, labels, Mode::Eval)?;
            probe.tensors_mut()[t].as_mut_slice()[i] = orig;
            grads.tensors_mut()[t].as_mut_slice()[i] = (up - down) / (2.0 * step);
        }
    }
    Ok(grads)
}
