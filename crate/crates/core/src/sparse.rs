//! Compressed-row sparse matrices and the kernels used by metapath
//! precomputation.
//!
//! Every constructor returns canonical form: offsets non-decreasing, column
//! indices strictly increasing within a row, finite values. Row reductions
//! always accumulate in ascending column order so serial and parallel runs
//! agree bit for bit.

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates raw compressed-row arrays.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::NonCanonical(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::NonCanonical(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::NonCanonical(
                "col_indices and values differ in length".into(),
            ));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::NonCanonical(format!("row_offsets decrease at row {i}")));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::NonCanonical(format!("column out of range in row {i}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::NonCanonical(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonCanonical("non-finite value".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Binary adjacency from an edge list. Duplicates collapse to one entry;
    /// the number of dropped duplicates is returned alongside the matrix.
    pub fn from_edges(
        n_rows: usize,
        n_cols: usize,
        edges: &[(usize, usize)],
    ) -> Result<(Self, usize)> {
        let mut sorted = edges.to_vec();
        for &(r, c) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Shape(format!(
                    "edge ({r}, {c}) outside a {n_rows}x{n_cols} adjacency"
                )));
            }
        }
        sorted.sort_unstable();
        let before = sorted.len();
        sorted.dedup();
        let dropped = before - sorted.len();
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &(r, _) in &sorted {
            row_offsets[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = sorted.iter().map(|&(_, c)| c).collect();
        let values = vec![1.0; sorted.len()];
        Ok((
            Self {
                n_rows,
                n_cols,
                row_offsets,
                col_indices,
                values,
            },
            dropped,
        ))
    }

    /// Sparse copy of a dense matrix, skipping exact zeros.
    pub fn from_dense(m: &Matrix<f64>) -> Self {
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Matrix<f64> {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(i, c, v);
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// Structural canonical-form check.
    pub fn is_canonical(&self) -> bool {
        Self::new(
            self.n_rows,
            self.n_cols,
            self.row_offsets.clone(),
            self.col_indices.clone(),
            self.values.clone(),
        )
        .is_ok()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in ascending order, so each transposed row stays sorted.
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_indices[slot] = i;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Binary union of two patterns of the same shape; every stored value is 1.
    pub fn union_pattern(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(self.mismatch("union_pattern", other));
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (a, _) = self.row(i);
            let (b, _) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < a.len() || q < b.len() {
                let next = match (a.get(p), b.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                col_indices.push(next);
            }
            row_offsets.push(col_indices.len());
        }
        let values = vec![1.0; col_indices.len()];
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Scales every nonzero row to sum to one. All-zero rows stay zero.
    pub fn row_normalize(&self) -> SparseMatrix {
        let mut values = self.values.clone();
        for i in 0..self.n_rows {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let sum: f64 = values[lo..hi].iter().sum();
            if sum != 0.0 {
                for v in &mut values[lo..hi] {
                    *v /= sum;
                }
            }
        }
        SparseMatrix {
            values,
            ..self.clone()
        }
    }

    /// Drops every `(i, i)` entry from the pattern. Remaining mass is not renormalized.
    pub fn rm_diag(&self) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c != i {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse times dense.
    pub fn spmm(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.spmm_with(x, Execution::default())
    }

    pub fn spmm_with(&self, x: &Matrix<f64>, exec: Execution) -> Result<Matrix<f64>> {
        if self.n_cols != x.rows() {
            return Err(Error::DimensionMismatch {
                op: "spmm",
                left_rows: self.n_rows,
                left_cols: self.n_cols,
                right_rows: x.rows(),
                right_cols: x.cols(),
            });
        }
        let width = x.cols();
        let mut out = Matrix::zeros(self.n_rows, width);
        exec.for_each_row(out.as_mut_slice(), width, |i, orow| {
            let (cols, vals) = self.row(i);
            for (&c, &w) in cols.iter().zip(vals) {
                for (o, &v) in orow.iter_mut().zip(x.row(c)) {
                    *o += w * v;
                }
            }
        });
        Ok(out)
    }

    /// Sparse times sparse (row-wise Gustavson).
    pub fn sparse_matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.sparse_matmul_with(other, Execution::default())
    }

    pub fn sparse_matmul_with(
        &self,
        other: &SparseMatrix,
        exec: Execution,
    ) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(self.mismatch("sparse_matmul", other));
        }
        let n_cols = other.n_cols;
        let rows: Vec<(Vec<usize>, Vec<f64>)> = exec.map_range(self.n_rows, |i| {
            // Dense accumulator per row; each column receives its terms in
            // ascending order of the shared index.
            let mut acc: Vec<f64> = Vec::new();
            let mut seen: Vec<bool> = Vec::new();
            let mut touched = Vec::new();
            let (acols, avals) = self.row(i);
            if !acols.is_empty() {
                acc.resize(n_cols, 0.0);
                seen.resize(n_cols, false);
            }
            for (&k, &a) in acols.iter().zip(avals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &b) in bcols.iter().zip(bvals) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            let vals = touched.iter().map(|&j| acc[j]).collect();
            (touched, vals)
        });
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let total: usize = rows.iter().map(|(c, _)| c.len()).sum();
        let mut col_indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (c, v) in rows {
            col_indices.extend(c);
            values.extend(v);
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    fn mismatch(&self, op: &'static str, other: &SparseMatrix) -> Error {
        Error::DimensionMismatch {
            op,
            left_rows: self.n_rows,
            left_cols: self.n_cols,
            right_rows: other.n_rows,
            right_cols: other.n_cols,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_binary(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> SparseMatrix {
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        SparseMatrix::from_edges(rows, cols, &edges).unwrap().0
    }

    fn random_weighted(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> SparseMatrix {
        let mut m = random_binary(rng, rows, cols, p);
        for v in &mut m.values {
            *v = rng.random_range(-2.0..2.0);
        }
        m
    }

    fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    // Triple-loop reference product, independent of the sparse kernels.
    fn dense_product(a: &Matrix, b: &Matrix) -> Matrix {
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

    #[test]
    fn identity_normalizes_to_identity() {
        let id = SparseMatrix::identity(5);
        assert_eq!(id.row_normalize(), id);
    }

    #[test]
    fn zero_rows_stay_zero_after_normalization() {
        let m = SparseMatrix::from_dense(&Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]));
        let n = m.row_normalize();
        assert_eq!(n.to_dense(), Matrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 0.0]]));
    }

    #[test]
    fn random_binary_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_binary(&mut rng, 50, 40, 0.1).row_normalize();
        for i in 0..50 {
            let (_, v) = m.row(i);
            if !v.is_empty() {
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn spmm_small_example() {
        let a = SparseMatrix::from_dense(&Matrix::from_rows(&[vec![0.5, 0.5]]));
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]);
        assert_eq!(a.spmm(&x).unwrap(), Matrix::from_rows(&[vec![2.0, 4.0]]));
        let x3 = random_dense(&mut ChaCha8Rng::seed_from_u64(1), 3, 4);
        assert_eq!(SparseMatrix::identity(3).spmm(&x3).unwrap(), x3);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_weighted(&mut rng, 30, 20, 0.2);
        let x = random_dense(&mut rng, 20, 8);
        let got = a.spmm(&x).unwrap();
        assert!(got.max_abs_diff(&dense_product(&a.to_dense(), &x)) < 1e-6);
    }

    #[test]
    fn spmm_rejects_mismatch() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(
            a.spmm(&Matrix::zeros(4, 2)),
            Err(Error::DimensionMismatch { op: "spmm", .. })
        ));
    }

    #[test]
    fn sparse_matmul_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_weighted(&mut rng, 12, 9, 0.3);
        assert_eq!(a.sparse_matmul(&SparseMatrix::identity(9)).unwrap(), a);

        let first = SparseMatrix::new(1, 2, vec![0, 1], vec![1], vec![0.25]).unwrap();
        let second = SparseMatrix::new(2, 3, vec![0, 0, 1], vec![2], vec![0.5]).unwrap();
        let prod = first.sparse_matmul(&second).unwrap();
        assert_eq!(prod.col_indices(), &[2]);
        assert_eq!(prod.values(), &[0.125]);

        let b = random_weighted(&mut rng, 9, 14, 0.3);
        let got = a.sparse_matmul(&b).unwrap().to_dense();
        assert!(got.max_abs_diff(&dense_product(&a.to_dense(), &b.to_dense())) < 1e-6);
        assert!(matches!(
            a.sparse_matmul(&a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rm_diag_examples() {
        let d = SparseMatrix::identity(4);
        assert_eq!(d.rm_diag().unwrap().nnz(), 0);

        let off = SparseMatrix::new(2, 2, vec![0, 1, 2], vec![1, 0], vec![0.3, 0.7]).unwrap();
        assert_eq!(off.rm_diag().unwrap(), off);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_weighted(&mut rng, 15, 15, 0.4);
        let r = m.rm_diag().unwrap().to_dense();
        let full = m.to_dense();
        for i in 0..15 {
            for j in 0..15 {
                let want = if i == j { 0.0 } else { full.get(i, j) };
                assert_eq!(r.get(i, j), want);
            }
        }
        assert!(matches!(
            SparseMatrix::empty(2, 3).rm_diag(),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn duplicate_edges_are_collapsed() {
        let (m, dropped) = SparseMatrix::from_edges(2, 2, &[(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn transpose_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_weighted(&mut rng, 7, 11, 0.3);
        let t = m.transpose();
        assert!(t.is_canonical());
        assert_eq!(t.to_dense(), m.to_dense().transpose());
    }

    #[test]
    fn validation_rejects_unsorted_rows() {
        let bad = SparseMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(matches!(bad, Err(Error::NonCanonical(_))));
    }

    #[test]
    fn serial_and_parallel_kernels_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_weighted(&mut rng, 200, 150, 0.05);
        let b = random_weighted(&mut rng, 150, 180, 0.05);
        let x = random_dense(&mut rng, 150, 16);
        assert_eq!(
            a.spmm_with(&x, Execution::Serial).unwrap(),
            a.spmm_with(&x, Execution::Parallel).unwrap()
        );
        assert_eq!(
            a.sparse_matmul_with(&b, Execution::Serial).unwrap(),
            a.sparse_matmul_with(&b, Execution::Parallel).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kernels_preserve_canonical_form(seed in any::<u64>(), n in 1usize..20, m in 1usize..20, p in 0.0f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_weighted(&mut rng, n, m, p);
            let b = random_weighted(&mut rng, m, n, p);
            let sq = a.sparse_matmul(&b).unwrap();
            prop_assert!(a.row_normalize().is_canonical());
            prop_assert!(sq.is_canonical());
            prop_assert!(sq.rm_diag().unwrap().is_canonical());
        }

        #[test]
        fn row_normalize_is_idempotent(seed in any::<u64>(), n in 1usize..25, m in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let once = random_binary(&mut rng, n, m, 0.3).row_normalize();
            let twice = once.row_normalize();
            prop_assert_eq!(once.col_indices(), twice.col_indices());
            for (x, y) in once.values().iter().zip(twice.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn spmm_is_associative_with_sparse_matmul(seed in any::<u64>(), n in 1usize..15, k in 1usize..15, m in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_binary(&mut rng, n, k, 0.3).row_normalize();
            let b = random_binary(&mut rng, k, m, 0.3).row_normalize();
            let x = random_dense(&mut rng, m, 4);
            let left = a.spmm(&b.spmm(&x).unwrap()).unwrap();
            let right = a.sparse_matmul(&b).unwrap().spmm(&x).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-6);
        }

        #[test]
        fn rm_diag_is_idempotent(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_weighted(&mut rng, n, n, 0.4);
            let once = a.rm_diag().unwrap();
            prop_assert_eq!(once.rm_diag().unwrap(), once);
        }

        #[test]
        fn one_hop_aggregation_is_neighbor_mean(seed in any::<u64>(), n in 1usize..20, m in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adj = random_binary(&mut rng, n, m, 0.3);
            let x = random_dense(&mut rng, m, 3);
            let agg = adj.row_normalize().spmm(&x).unwrap();
            for i in 0..n {
                let (cols, _) = adj.row(i);
                for d in 0..3 {
                    let mean = if cols.is_empty() {
                        0.0
                    } else {
                        cols.iter().map(|&c| x.get(c, d)).sum::<f64>() / cols.len() as f64
                    };
                    prop_assert!((agg.get(i, d) - mean).abs() < 1e-12);
                }
            }
        }
    }
}
