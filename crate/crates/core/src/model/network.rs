//! Full forward and backward pass: projection → fusion → classifier → softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fusion::{
    hsplit, softmax_in_place, transformer_backward, transformer_forward, weighted_sum_backward,
    weighted_sum_forward, TransformerCache, WeightedSumCache,
};
use super::mlp::MlpCache;
use super::params::{FusionParams, Gradients, ModelParams};
use crate::dense::{Matrix, Real};
use crate::error::{Error, Result};
use crate::metapath::SemanticMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No dropout.
    Eval,
    /// Dropout masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
pub enum FusionCache<T: Real> {
    Transformer(TransformerCache<T>),
    WeightedSum(WeightedSumCache<T>),
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    pub rows: Vec<usize>,
    pub projection_caches: Vec<MlpCache<T>>,
    /// `h'` per metapath, `B × D` each.
    pub projected: Vec<Matrix<T>>,
    pub fusion: FusionCache<T>,
    /// Classifier input (`H^c` in transformer mode).
    pub fused: Matrix<T>,
    pub classifier_cache: MlpCache<T>,
    pub logits: Matrix<T>,
    pub probabilities: Matrix<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Attention weights `B × K·K`, transformer mode only.
    pub fn attention(&self) -> Option<&Matrix<T>> {
        match &self.fusion {
            FusionCache::Transformer(c) => Some(&c.alpha),
            FusionCache::WeightedSum(_) => None,
        }
    }
}

/// Checks that `inputs` line up with the metapaths the parameters were built for.
pub fn check_inputs<T: Real>(params: &ModelParams<T>, inputs: &[SemanticMatrix]) -> Result<()> {
    if inputs.len() != params.inputs.len() {
        return Err(Error::InputMismatch(format!(
            "model expects {} semantic matrices, got {}",
            params.inputs.len(),
            inputs.len()
        )));
    }
    let rows = inputs[0].matrix.rows();
    for (spec, sm) in params.inputs.iter().zip(inputs) {
        if spec.metapath != sm.metapath {
            return Err(Error::InputMismatch(format!(
                "expected metapath {}, got {}",
                spec.metapath, sm.metapath
            )));
        }
        if sm.matrix.cols() != spec.dim || sm.matrix.rows() != rows {
            return Err(Error::InputMismatch(format!(
                "metapath {} has shape {:?}, expected width {}",
                sm.metapath,
                sm.matrix.shape(),
                spec.dim
            )));
        }
    }
    Ok(())
}

pub fn forward<T: Real>(
    params: &ModelParams<T>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    mode: Mode,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    check_inputs(params, inputs)?;
    let n = inputs[0].matrix.rows();
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::Shape(format!("row {bad} out of range ({n} nodes)")));
    }
    if rows.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let cfg = &params.config;
    let mut rng = match mode {
        Mode::Train { seed } if cfg.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let mut projected = Vec::with_capacity(inputs.len());
    let mut projection_caches = Vec::with_capacity(inputs.len());
    for (mlp, sm) in params.projections.iter().zip(inputs) {
        let x: Matrix<T> = sm.matrix.gather_rows(rows).cast();
        let (h, c) = mlp.forward(&x, rng.as_mut().map(|r| (cfg.dropout, r)))?;
        projected.push(h);
        projection_caches.push(c);
    }

    let (fused, fusion) = match &params.fusion {
        FusionParams::Transformer {
            query,
            key,
            value,
            beta,
        } => {
            let (f, c) = transformer_forward(
                query,
                key,
                value,
                beta.get(0, 0),
                &projected,
                cfg.attention_scaling,
            )?;
            (f, FusionCache::Transformer(c))
        }
        FusionParams::WeightedSum {
            weight,
            bias,
            query,
        } => {
            let (f, c) = weighted_sum_forward(weight, bias, query, &projected)?;
            (f, FusionCache::WeightedSum(c))
        }
    };

    let (logits, classifier_cache) = params
        .classifier
        .forward(&fused, rng.as_mut().map(|r| (cfg.dropout, r)))?;
    let mut probabilities = logits.clone();
    for row in probabilities.as_mut_slice().chunks_mut(cfg.num_classes) {
        softmax_in_place(row);
    }
    Ok((
        probabilities.clone(),
        ForwardCache {
            rows: rows.to_vec(),
            projection_caches,
            projected,
            fusion,
            fused,
            classifier_cache,
            logits,
            probabilities,
        },
    ))
}

/// Mean cross-entropy computed stably from logits.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, targets: &[usize]) -> T {
    let mut total = T::zero();
    for (r, &y) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
        total += lse - row[y];
    }
    total / T::of(targets.len() as f64)
}

/// `(probabilities − one_hot) / B`.
pub fn logit_gradient<T: Real>(probabilities: &Matrix<T>, targets: &[usize]) -> Matrix<T> {
    let mut d = probabilities.clone();
    let inv_b = T::one() / T::of(targets.len() as f64);
    for (r, &y) in targets.iter().enumerate() {
        let row = d.row_mut(r);
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v *= inv_b;
        }
    }
    d
}

/// Backpropagates mean cross-entropy against `targets` (one class per cached row).
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    targets: &[usize],
) -> Result<Gradients<T>> {
    backward_from_logits(params, cache, logit_gradient(&cache.probabilities, targets))
}

/// Backpropagates an arbitrary upstream logit gradient.
pub fn backward_from_logits<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    d_logits: Matrix<T>,
) -> Result<Gradients<T>> {
    let mut grads = params.zeros_like();
    let d_fused = params
        .classifier
        .backward(&cache.classifier_cache, d_logits, &mut grads.classifier, true)?
        .expect("input gradient requested");

    let d_projected = match (&params.fusion, &mut grads.fusion, &cache.fusion) {
        (
            FusionParams::Transformer {
                query,
                key,
                value,
                beta,
            },
            FusionParams::Transformer {
                query: gq,
                key: gk,
                value: gv,
                beta: gbeta,
            },
            FusionCache::Transformer(c),
        ) => {
            let mut db = T::zero();
            let out = transformer_backward(
                query,
                key,
                value,
                beta.get(0, 0),
                &cache.projected,
                c,
                &d_fused,
                params.config.attention_scaling,
                (gq, gk, gv, &mut db),
            )?;
            gbeta.set(0, 0, db);
            out
        }
        (
            FusionParams::WeightedSum { weight, query, .. },
            FusionParams::WeightedSum {
                weight: gw,
                bias: gb,
                query: gq,
            },
            FusionCache::WeightedSum(c),
        ) => weighted_sum_backward(weight, query, &cache.projected, c, &d_fused, (gw, gb, gq))?,
        _ => unreachable!("cache built from these parameters"),
    };

    for ((mlp, c), (g, d)) in params
        .projections
        .iter()
        .zip(&cache.projection_caches)
        .zip(grads.projections.iter_mut().zip(d_projected))
    {
        mlp.backward(c, d, g, false)?;
    }
    Ok(grads)
}

/// Class ids for `rows`, failing on any unlabeled node.
pub fn batch_targets(labels: &[Option<usize>], rows: &[usize]) -> Result<Vec<usize>> {
    rows.iter()
        .map(|&r| labels.get(r).copied().flatten().ok_or(Error::UnlabeledRow(r)))
        .collect()
}

pub fn loss_and_grad<T: Real>(
    params: &ModelParams<T>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
    mode: Mode,
) -> Result<(T, Gradients<T>)> {
    let targets = batch_targets(labels, rows)?;
    let (_, cache) = forward(params, inputs, rows, mode)?;
    let loss = cross_entropy(&cache.logits, &targets);
    let grads = backward(params, &cache, &targets)?;
    Ok((loss, grads))
}

/// Loss only; used by finite differences.
pub fn loss<T: Real>(
    params: &ModelParams<T>,
    inputs: &[SemanticMatrix],
    rows: &[usize],
    labels: &[Option<usize>],
    mode: Mode,
) -> Result<T> {
    let targets = batch_targets(labels, rows)?;
    let (_, cache) = forward(params, inputs, rows, mode)?;
    Ok(cross_entropy(&cache.logits, &targets))
}

/// Splits a fused `B × K·D` matrix back into per-metapath blocks.
pub fn split_fused<T: Real>(fused: &Matrix<T>, k: usize) -> Vec<Matrix<T>> {
    hsplit(fused, k)
}
