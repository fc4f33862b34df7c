//! Row-major dense matrices generic over the floating-point width.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Scalar type usable on the training path (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Debug> Debug for Matrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input (test helper).
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        self.map(|v| U::of(v.as_f64()))
    }

    /// Copies the listed rows into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix<T> {
        let mut out = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            out.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data: out,
        }
    }

    /// `self * other`. Each output entry sums over the inner index in ascending order.
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.matmul_with(other, Execution::default())
    }

    pub fn matmul_with(&self, other: &Matrix<T>, exec: Execution) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(self.mismatch("matmul", other));
        }
        let m = other.cols;
        let mut out = Matrix::zeros(self.rows, m);
        exec.for_each_row(&mut out.data, m, |i, orow| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        });
        Ok(out)
    }

    /// `selfᵀ * other`, summing over shared rows in ascending order.
    pub fn t_matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != other.rows {
            return Err(self.mismatch("t_matmul", other));
        }
        let m = other.cols;
        let mut out = Matrix::zeros(self.cols, m);
        Execution::default().for_each_row(&mut out.data, m, |p, orow| {
            for i in 0..self.rows {
                let a = self.data[i * self.cols + p];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(i)) {
                    *o += a * b;
                }
            }
        });
        Ok(out)
    }

    /// `self * otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.cols {
            return Err(self.mismatch("matmul_t", other));
        }
        let m = other.rows;
        let mut out = Matrix::zeros(self.rows, m);
        Execution::default().for_each_row(&mut out.data, m, |i, orow| {
            let a = self.row(i);
            for (j, o) in orow.iter_mut().enumerate() {
                *o = dot(a, other.row(j));
            }
        });
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Adds `row` to every row.
    pub fn add_row_broadcast(&mut self, row: &[T]) {
        debug_assert_eq!(row.len(), self.cols);
        for r in self.data.chunks_mut(self.cols.max(1)) {
            for (v, &b) in r.iter_mut().zip(row) {
                *v += b;
            }
        }
    }

    /// Column sums in ascending row order.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in self.data.chunks(self.cols.max(1)) {
            for (o, &v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    fn mismatch(&self, op: &'static str, other: &Matrix<T>) -> Error {
        Error::DimensionMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn sample(rows: usize, cols: usize, salt: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 + salt) * 0.37).sin())
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn products_agree_with_naive() {
        let a = sample(5, 7, 0.3);
        let b = sample(7, 4, 1.1);
        let c = sample(5, 4, 2.0);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-12);
        let at_c = a.t_matmul(&c).unwrap();
        assert!(at_c.max_abs_diff(&naive(&a.transpose(), &c)) < 1e-12);
        let bt = b.transpose();
        assert!(a.matmul_t(&bt).unwrap().max_abs_diff(&naive(&a, &b)) < 1e-12);
    }

    #[test]
    fn serial_and_parallel_matmul_are_bitwise_equal() {
        let a = sample(64, 33, 0.1);
        let b = sample(33, 17, 0.2);
        let s = a.matmul_with(&b, Execution::Serial).unwrap();
        let p = a.matmul_with(&b, Execution::Parallel).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn mismatched_product_is_an_error() {
        let a = sample(2, 3, 0.0);
        assert!(matches!(
            a.matmul(&a),
            Err(Error::DimensionMismatch { op: "matmul", .. })
        ));
    }
}
