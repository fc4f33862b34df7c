//! Multi-layer perceptron: `linear → norm → relu → dropout → … → linear`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dense::{Matrix, Real};
use crate::error::Result;

/// Epsilon of the per-vector standardization.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T: Real> {
    /// `in × out`; forward is `x · weight + bias`.
    pub weight: Matrix<T>,
    /// `1 × out`.
    pub bias: Matrix<T>,
}

impl<T: Real> Linear<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: glorot(rng, fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Matrix::zeros(1, self.bias.cols()),
        }
    }

    fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul(&self.weight)?;
        z.add_row_broadcast(self.bias.as_slice());
        Ok(z)
    }
}

pub(crate) fn glorot<T: Real>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
}

/// Learned scale and shift applied after standardizing each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T: Real> {
    pub scale: Matrix<T>,
    pub shift: Matrix<T>,
}

impl<T: Real> Norm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            scale: Matrix::from_vec(1, width, vec![T::one(); width]).expect("sized"),
            shift: Matrix::zeros(1, width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            scale: Matrix::zeros(1, self.scale.cols()),
            shift: Matrix::zeros(1, self.shift.cols()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Real> {
    pub layers: Vec<Linear<T>>,
    /// One per hidden layer (`layers.len() - 1`).
    pub norms: Vec<Norm<T>>,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    /// Input to each linear layer.
    pub inputs: Vec<Matrix<T>>,
    /// Standardized pre-activations of each hidden layer.
    pub standardized: Vec<Matrix<T>>,
    /// Per-row `1 / sqrt(var + eps)` of each hidden layer.
    pub inv_std: Vec<Vec<T>>,
    /// Output of scale/shift of each hidden layer (before the rectifier).
    pub normalized: Vec<Matrix<T>>,
    /// Dropout multipliers (`0` or `1/(1-p)`) when training.
    pub masks: Vec<Option<Vec<T>>>,
}

impl<T: Real> Mlp<T> {
    /// `dims = [in, hidden…, out]`.
    pub fn init(rng: &mut ChaCha8Rng, dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(rng, w[0], w[1]))
            .collect();
        let norms = dims[1..dims.len() - 1].iter().map(|&d| Norm::new(d)).collect();
        Self { layers, norms }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
            norms: self.norms.iter().map(Norm::zeros_like).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.cols()
    }

    /// `dropout` draws masks from `rng` when present.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<(Matrix<T>, MlpCache<T>)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            standardized: Vec::new(),
            inv_std: Vec::new(),
            normalized: Vec::new(),
            masks: Vec::new(),
        };
        let mut dropout = dropout;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            cache.inputs.push(h);
            if l + 1 == self.layers.len() {
                return Ok((z, cache));
            }
            let norm = &self.norms[l];
            let (xhat, inv_std) = standardize(&z);
            let mut n = xhat.clone();
            for row in n.as_mut_slice().chunks_mut(z.cols()) {
                for ((v, &g), &b) in row.iter_mut().zip(norm.scale.as_slice()).zip(norm.shift.as_slice()) {
                    *v = *v * g + b;
                }
            }
            let mut a = n.map(|v| v.max(T::zero()));
            let mask = match dropout.as_mut() {
                Some((p, rng)) if *p > 0.0 => {
                    let keep = T::of(1.0 / (1.0 - *p));
                    let m: Vec<T> = (0..a.as_slice().len())
                        .map(|_| if rng.random_bool(1.0 - *p) { keep } else { T::zero() })
                        .collect();
                    for (v, &k) in a.as_mut_slice().iter_mut().zip(&m) {
                        *v *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            cache.standardized.push(xhat);
            cache.inv_std.push(inv_std);
            cache.normalized.push(n);
            cache.masks.push(mask);
            h = a;
        }
        unreachable!("loop returns at the last layer")
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `want_input` is set.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        d_out: Matrix<T>,
        grad: &mut Mlp<T>,
        want_input: bool,
    ) -> Result<Option<Matrix<T>>> {
        let mut dz = d_out;
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grad.layers[l].weight.add_assign(&input.t_matmul(&dz)?);
            let db = dz.column_sums();
            for (g, d) in grad.layers[l].bias.as_mut_slice().iter_mut().zip(db) {
                *g += d;
            }
            if l == 0 && !want_input {
                return Ok(None);
            }
            let mut dx = dz.matmul_t(&self.layers[l].weight)?;
            if l == 0 {
                return Ok(Some(dx));
            }
            let h = l - 1;
            if let Some(mask) = &cache.masks[h] {
                for (v, &k) in dx.as_mut_slice().iter_mut().zip(mask) {
                    *v *= k;
                }
            }
            for (v, &n) in dx.as_mut_slice().iter_mut().zip(cache.normalized[h].as_slice()) {
                if n <= T::zero() {
                    *v = T::zero();
                }
            }
            dz = norm_backward(
                &self.norms[h],
                &mut grad.norms[h],
                &cache.standardized[h],
                &cache.inv_std[h],
                dx,
            );
        }
        Ok(None)
    }
}

fn standardize<T: Real>(z: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let width = z.cols();
    let w = T::of(width as f64);
    let eps = T::of(NORM_EPS);
    let mut out = z.clone();
    let mut inv = Vec::with_capacity(z.rows());
    for row in out.as_mut_slice().chunks_mut(width) {
        let mean = row.iter().copied().sum::<T>() / w;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / w;
        let s = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * s;
        }
        inv.push(s);
    }
    (out, inv)
}

fn norm_backward<T: Real>(
    norm: &Norm<T>,
    grad: &mut Norm<T>,
    xhat: &Matrix<T>,
    inv_std: &[T],
    dn: Matrix<T>,
) -> Matrix<T> {
    let width = dn.cols();
    let w = T::of(width as f64);
    for (drow, xrow) in dn.as_slice().chunks(width).zip(xhat.as_slice().chunks(width)) {
        for j in 0..width {
            grad.scale.as_mut_slice()[j] += drow[j] * xrow[j];
            grad.shift.as_mut_slice()[j] += drow[j];
        }
    }
    let mut dz = Matrix::zeros(dn.rows(), width);
    for (i, ((drow, xrow), out)) in dn
        .as_slice()
        .chunks(width)
        .zip(xhat.as_slice().chunks(width))
        .zip(dz.as_mut_slice().chunks_mut(width))
        .enumerate()
    {
        let dxhat: Vec<T> = drow
            .iter()
            .zip(norm.scale.as_slice())
            .map(|(&d, &g)| d * g)
            .collect();
        let mean_d = dxhat.iter().copied().sum::<T>() / w;
        let mean_dx = dxhat.iter().zip(xrow).map(|(&d, &x)| d * x).sum::<T>() / w;
        for j in 0..width {
            out[j] = inv_std[i] * (dxhat[j] - mean_d - xrow[j] * mean_dx);
        }
    }
    dz
}
