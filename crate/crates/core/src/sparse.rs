//! Compressed sparse row matrices and the sparse-dense product used for
//! layer propagation.

use rayon::prelude::*;

use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Row-compressed real matrix.
///
/// Invariants: `row_offsets` has `n_rows + 1` monotone entries, column
/// indices are strictly increasing within a row and below `n_cols`, and no
/// stored value is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidSparse(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidSparse("row_offsets do not span the entries".into()));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidSparse("col_indices and values differ in length".into()));
        }
        for r in 0..n_rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return Err(Error::InvalidSparse(format!("row_offsets decrease at row {r}")));
            }
            let cols = &col_indices[start..end];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::InvalidSparse(format!("column out of range in row {r}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSparse(format!(
                    "columns not strictly increasing in row {r}"
                )));
            }
        }
        if values.contains(&0.0) {
            return Err(Error::InvalidSparse("explicit zero stored".into()));
        }
        Ok(Self { n_rows, n_cols, row_offsets, col_indices, values })
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// resulting zeros dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidSparse(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            per_row[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut sum = 0.0;
                while i < row.len() && row[i].0 == c {
                    sum += row[i].1;
                    i += 1;
                }
                if sum != 0.0 {
                    col_indices.push(c);
                    values.push(sum);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
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

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
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

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).all(|(&c, &v)| (self.get(c, r) - v).abs() <= tol)
        })
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Sparse-dense product `self * x`.
    ///
    /// Each output row is accumulated in stored column order, so the result
    /// does not depend on how rows are distributed across workers.
    pub fn spmm(&self, x: &Matrix) -> Result<Matrix> {
        if self.n_cols != x.rows() {
            return Err(Error::Dimension(format!(
                "spmm: {}x{} times {}x{}",
                self.n_rows,
                self.n_cols,
                x.rows(),
                x.cols()
            )));
        }
        let d = x.cols();
        let mut out = Matrix::zeros(self.n_rows, d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |(r, out_row): (usize, &mut [f64])| {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        };
        // Small products are not worth the scheduling overhead.
        if self.nnz() * d < 1 << 16 {
            out.as_mut_slice().chunks_mut(d).enumerate().for_each(kernel);
        } else {
            out.as_mut_slice().par_chunks_mut(d).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// Sparse-sparse product `self * other` (row-wise Gustavson).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::Dimension(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.n_rows)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; other.n_cols], vec![false; other.n_cols], Vec::new()),
                |(acc, seen, touched), r| {
                    touched.clear();
                    let (cols, vals) = self.row(r);
                    for (&k, &a) in cols.iter().zip(vals) {
                        let (ocols, ovals) = other.row(k);
                        for (&c, &b) in ocols.iter().zip(ovals) {
                            if !seen[c] {
                                seen[c] = true;
                                touched.push(c);
                            }
                            acc[c] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    let mut out_cols = Vec::with_capacity(touched.len());
                    let mut out_vals = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        if acc[c] != 0.0 {
                            out_cols.push(c);
                            out_vals.push(acc[c]);
                        }
                        acc[c] = 0.0;
                        seen[c] = false;
                    }
                    (out_cols, out_vals)
                },
            )
            .collect();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (c, v) in rows {
            col_indices.extend(c);
            values.extend(v);
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |r, c| {
            (0..a.cols()).map(|k| a.get(r, k) * b.get(k, c)).sum()
        })
    }

    fn random_sparse(n: usize, m: usize, density: f64, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for r in 0..n {
            for c in 0..m {
                if rng.random_bool(density) {
                    trip.push((r, c, rng.random_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n, m, trip).unwrap()
    }

    #[test]
    fn rejects_broken_invariants() {
        assert!(SparseMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
        assert!(SparseMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::new(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(SparseMatrix::new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m =
            SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 0, -1.0)])
                .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 3.0);
    }

    #[test]
    fn identity_spmm_is_noop() {
        let x = Matrix::from_fn(4, 3, |r, c| (r as f64) - 0.5 * c as f64);
        assert_eq!(SparseMatrix::identity(4).spmm(&x).unwrap(), x);
    }

    #[test]
    fn empty_rows_give_zero_rows() {
        let m = SparseMatrix::from_triplets(3, 3, [(1, 2, 2.0)]).unwrap();
        let x = Matrix::from_fn(3, 2, |r, c| 1.0 + r as f64 + c as f64);
        let y = m.spmm(&x).unwrap();
        assert_eq!(y.row(0), &[0.0, 0.0]);
        assert_eq!(y.row(2), &[0.0, 0.0]);
        assert_eq!(y.row(1), &[6.0, 8.0]);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let a = random_sparse(5, 5, 0.4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let got = a.spmm(&x).unwrap();
        let want = dense_matmul(&a.to_dense(), &x);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(a.spmm(&Matrix::zeros(2, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_matches_dense_oracle() {
        let a = random_sparse(7, 6, 0.3, 1);
        let b = random_sparse(6, 8, 0.3, 2);
        let got = a.matmul(&b).unwrap().to_dense();
        let want = dense_matmul(&a.to_dense(), &b.to_dense());
        assert!(got.max_abs_diff(&want) < 1e-12);
    }
}
