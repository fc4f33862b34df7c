//! Semantic fusion across the per-metapath projected vectors.
//!
//! Transformer mode, per node with projected vectors `h'_1..h'_K`:
//!
//! ```text
//! q_i = h'_i Wq    k_i = h'_i Wk    v_i = h'_i Wv
//! α_ij = softmax_j(q_i · k_j)
//! h_i  = β Σ_j α_ij v_j + h'_i
//! ```
//!
//! and the outputs are concatenated in metapath order. Weighted-sum mode
//! scores each metapath by `mean_nodes(a · tanh(h' W + b))`, softmaxes the
//! scores over metapaths and returns the weighted sum of projected vectors.

use crate::dense::{dot, Matrix, Real};
use crate::error::Result;
use crate::exec::Execution;

#[derive(Debug, Clone)]
pub struct TransformerCache<T: Real> {
    pub queries: Vec<Matrix<T>>,
    pub keys: Vec<Matrix<T>>,
    pub values: Vec<Matrix<T>>,
    /// `B × K·K`, row-major per node: `alpha[b][i*K + j]`.
    pub alpha: Matrix<T>,
    /// `Σ_j α_ij v_j`, laid out `B × K·D` like the fused output.
    pub attended: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct WeightedSumCache<T: Real> {
    /// `tanh(h'_k W + b)` per metapath.
    pub activations: Vec<Matrix<T>>,
    pub scores: Vec<T>,
    pub weights: Vec<T>,
}

/// Stacks `parts` side by side.
pub fn hconcat<T: Real>(parts: &[Matrix<T>]) -> Matrix<T> {
    let rows = parts.first().map_or(0, Matrix::rows);
    let width: usize = parts.iter().map(Matrix::cols).sum();
    let mut out = Vec::with_capacity(rows * width);
    for b in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(b));
        }
    }
    Matrix::from_vec(rows, width, out).expect("sized buffer")
}

/// Inverse of [`hconcat`] for `k` equal-width blocks.
pub fn hsplit<T: Real>(m: &Matrix<T>, k: usize) -> Vec<Matrix<T>> {
    let w = m.cols() / k;
    (0..k)
        .map(|i| {
            let mut data = Vec::with_capacity(m.rows() * w);
            for b in 0..m.rows() {
                data.extend_from_slice(&m.row(b)[i * w..(i + 1) * w]);
            }
            Matrix::from_vec(m.rows(), w, data).expect("sized buffer")
        })
        .collect()
}

pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

pub fn transformer_forward<T: Real>(
    query: &Matrix<T>,
    key: &Matrix<T>,
    value: &Matrix<T>,
    beta: T,
    projected: &[Matrix<T>],
    scaling: bool,
) -> Result<(Matrix<T>, TransformerCache<T>)> {
    let k = projected.len();
    let b = projected[0].rows();
    let d = value.cols();
    let scale = logit_scale::<T>(query.cols(), scaling);
    let queries = projected.iter().map(|h| h.matmul(query)).collect::<Result<Vec<_>>>()?;
    let keys = projected.iter().map(|h| h.matmul(key)).collect::<Result<Vec<_>>>()?;
    let values = projected.iter().map(|h| h.matmul(value)).collect::<Result<Vec<_>>>()?;

    let per_row = Execution::default().map_range(b, |row| {
        let mut alpha = vec![T::zero(); k * k];
        let mut attended = vec![T::zero(); k * d];
        for i in 0..k {
            let a = &mut alpha[i * k..(i + 1) * k];
            for (j, slot) in a.iter_mut().enumerate() {
                *slot = scale * dot(queries[i].row(row), keys[j].row(row));
            }
            softmax_in_place(a);
            let out = &mut attended[i * d..(i + 1) * d];
            for (j, &w) in a.iter().enumerate() {
                for (o, &v) in out.iter_mut().zip(values[j].row(row)) {
                    *o += w * v;
                }
            }
        }
        (alpha, attended)
    });
    let mut alpha = Vec::with_capacity(b * k * k);
    let mut attended = Vec::with_capacity(b * k * d);
    for (a, o) in per_row {
        alpha.extend(a);
        attended.extend(o);
    }
    let alpha = Matrix::from_vec(b, k * k, alpha)?;
    let attended = Matrix::from_vec(b, k * d, attended)?;

    let mut fused = hconcat(projected);
    for (f, &a) in fused.as_mut_slice().iter_mut().zip(attended.as_slice()) {
        *f += beta * a;
    }
    Ok((
        fused,
        TransformerCache {
            queries,
            keys,
            values,
            alpha,
            attended,
        },
    ))
}

/// Gradients of the transformer fusion. Returns `dL/dh'_k` per metapath.
#[allow(clippy::too_many_arguments)]
pub fn transformer_backward<T: Real>(
    query: &Matrix<T>,
    key: &Matrix<T>,
    value: &Matrix<T>,
    beta: T,
    projected: &[Matrix<T>],
    cache: &TransformerCache<T>,
    d_fused: &Matrix<T>,
    scaling: bool,
    grads: (&mut Matrix<T>, &mut Matrix<T>, &mut Matrix<T>, &mut T),
) -> Result<Vec<Matrix<T>>> {
    let k = projected.len();
    let b = projected[0].rows();
    let d = value.cols();
    let da = query.cols();
    let scale = logit_scale::<T>(da, scaling);
    let (gq, gk, gv, gbeta) = grads;

    let per_row = Execution::default().map_range(b, |row| {
        let alpha = cache.alpha.row(row);
        let d_h = d_fused.row(row);
        let attended = cache.attended.row(row);
        let d_beta = dot(d_h, attended);
        let mut dq = vec![T::zero(); k * da];
        let mut dk = vec![T::zero(); k * da];
        let mut dv = vec![T::zero(); k * d];
        for i in 0..k {
            let d_out: Vec<T> = d_h[i * d..(i + 1) * d].iter().map(|&g| beta * g).collect();
            let a = &alpha[i * k..(i + 1) * k];
            let d_alpha: Vec<T> = (0..k).map(|j| dot(&d_out, cache.values[j].row(row))).collect();
            for (j, &w) in a.iter().enumerate() {
                for (g, &o) in dv[j * d..(j + 1) * d].iter_mut().zip(&d_out) {
                    *g += w * o;
                }
            }
            let inner = dot(a, &d_alpha);
            for j in 0..k {
                let ds = a[j] * (d_alpha[j] - inner) * scale;
                let qi = cache.queries[i].row(row);
                let kj = cache.keys[j].row(row);
                for t in 0..da {
                    dq[i * da + t] += ds * kj[t];
                    dk[j * da + t] += ds * qi[t];
                }
            }
        }
        (d_beta, dq, dk, dv)
    });

    let mut dq_all = Vec::with_capacity(b * k * da);
    let mut dk_all = Vec::with_capacity(b * k * da);
    let mut dv_all = Vec::with_capacity(b * k * d);
    for (db, dq, dk, dv) in per_row {
        *gbeta += db;
        dq_all.extend(dq);
        dk_all.extend(dk);
        dv_all.extend(dv);
    }
    let dq = hsplit(&Matrix::from_vec(b, k * da, dq_all)?, k);
    let dk = hsplit(&Matrix::from_vec(b, k * da, dk_all)?, k);
    let dv = hsplit(&Matrix::from_vec(b, k * d, dv_all)?, k);

    let mut d_projected = hsplit(d_fused, k);
    for (i, h) in projected.iter().enumerate() {
        gq.add_assign(&h.t_matmul(&dq[i])?);
        gk.add_assign(&h.t_matmul(&dk[i])?);
        gv.add_assign(&h.t_matmul(&dv[i])?);
        d_projected[i].add_assign(&dq[i].matmul_t(query)?);
        d_projected[i].add_assign(&dk[i].matmul_t(key)?);
        d_projected[i].add_assign(&dv[i].matmul_t(value)?);
    }
    Ok(d_projected)
}

fn logit_scale<T: Real>(attn_dim: usize, scaling: bool) -> T {
    if scaling {
        T::one() / T::of(attn_dim as f64).sqrt()
    } else {
        T::one()
    }
}

pub fn weighted_sum_forward<T: Real>(
    weight: &Matrix<T>,
    bias: &Matrix<T>,
    query: &Matrix<T>,
    projected: &[Matrix<T>],
) -> Result<(Matrix<T>, WeightedSumCache<T>)> {
    let b = projected[0].rows();
    let inv_b = T::one() / T::of(b as f64);
    let mut activations = Vec::with_capacity(projected.len());
    let mut scores = Vec::with_capacity(projected.len());
    for h in projected {
        let mut u = h.matmul(weight)?;
        u.add_row_broadcast(bias.as_slice());
        let t = u.map(|v| v.tanh());
        let total: T = (0..b).map(|r| dot(t.row(r), query.as_slice())).sum();
        scores.push(total * inv_b);
        activations.push(t);
    }
    let mut weights = scores.clone();
    softmax_in_place(&mut weights);
    let mut fused = Matrix::zeros(b, projected[0].cols());
    for (h, &w) in projected.iter().zip(&weights) {
        for (f, &v) in fused.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *f += w * v;
        }
    }
    Ok((
        fused,
        WeightedSumCache {
            activations,
            scores,
            weights,
        },
    ))
}

pub fn weighted_sum_backward<T: Real>(
    weight: &Matrix<T>,
    query: &Matrix<T>,
    projected: &[Matrix<T>],
    cache: &WeightedSumCache<T>,
    d_fused: &Matrix<T>,
    grads: (&mut Matrix<T>, &mut Matrix<T>, &mut Matrix<T>),
) -> Result<Vec<Matrix<T>>> {
    let (gw, gb, gq) = grads;
    let b = d_fused.rows();
    let inv_b = T::one() / T::of(b as f64);
    let w = &cache.weights;
    let d_weight: Vec<T> = projected.iter().map(|h| dot(d_fused.as_slice(), h.as_slice())).collect();
    let inner = dot(w, &d_weight);
    let mut out = Vec::with_capacity(projected.len());
    for (k, h) in projected.iter().enumerate() {
        let mut dh = d_fused.clone();
        dh.scale(w[k]);
        let d_score = w[k] * (d_weight[k] - inner) * inv_b;
        let t = &cache.activations[k];
        let mut du = Matrix::zeros(b, t.cols());
        for r in 0..b {
            let trow = t.row(r);
            for (g, &tv) in gq.as_mut_slice().iter_mut().zip(trow) {
                *g += d_score * tv;
            }
            for ((o, &tv), &a) in du.row_mut(r).iter_mut().zip(trow).zip(query.as_slice()) {
                *o = d_score * a * (T::one() - tv * tv);
            }
        }
        gw.add_assign(&h.t_matmul(&du)?);
        for (g, s) in gb.as_mut_slice().iter_mut().zip(du.column_sums()) {
            *g += s;
        }
        dh.add_assign(&du.matmul_t(weight)?);
        out.push(dh);
    }
    Ok(out)
}
