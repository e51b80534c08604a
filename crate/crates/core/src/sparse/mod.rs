//! Compressed-row sparse matrices and the products the multigrid setup needs.
//!
//! Symmetric matrices are always stored with both triangles. All index arrays
//! use `usize`, which is 64 bits on every supported target.

mod mtx;

pub use mtx::{load_matrix_market, read_matrix_market, write_matrix_market};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mat = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        mat.validate()?;
        Ok(mat)
    }

    // Callers guarantee sorted, in-bounds rows.
    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let mat = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        debug_assert!(mat.validate().is_ok());
        mat
    }

    /// Assembles from (row, col, value) triplets. Duplicates are summed in the
    /// order they appear.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::IndexOutOfBounds {
                    row: i,
                    col: j,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: duplicates keep insertion order so their sum is reproducible
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self::from_parts_unchecked(
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..dense.n_rows() {
            for j in 0..dense.n_cols() {
                let v = dense.get(i, j);
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_parts_unchecked(
            dense.n_rows(),
            dense.n_cols(),
            row_offsets,
            col_indices,
            values,
        )
    }

    /// Checks monotone offsets, strictly increasing in-bounds columns per row
    /// and consistent array lengths.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStructure(msg));
        if self.row_offsets.len() != self.n_rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                self.row_offsets.len(),
                self.n_rows + 1
            ));
        }
        if self.row_offsets[0] != 0 {
            return bad("row_offsets[0] != 0".into());
        }
        if self.col_indices.len() != self.values.len() {
            return bad("col_indices and values differ in length".into());
        }
        if self.row_offsets[self.n_rows] != self.values.len() {
            return bad("row_offsets[n_rows] != nnz".into());
        }
        for i in 0..self.n_rows {
            let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if start > end {
                return bad(format!("row_offsets decreases at row {i}"));
            }
            let cols = &self.col_indices[start..end];
            for (k, &j) in cols.iter().enumerate() {
                if j >= self.n_cols {
                    return Err(Error::IndexOutOfBounds {
                        row: i,
                        col: j,
                        n_rows: self.n_rows,
                        n_cols: self.n_cols,
                    });
                }
                if k > 0 && cols[k - 1] >= j {
                    return bad(format!("columns not strictly increasing in row {i}"));
                }
            }
        }
        Ok(())
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

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    /// Diagonal entries, zero where none is stored.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i).unwrap_or(0.0))
            .collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "spmv: matrix has {} columns, vector has length {}",
                self.n_cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked `y = A x`; the summation within a row follows stored column order.
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    /// `r = b - A x`.
    pub fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n_rows);
        for (i, ri) in r.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *ri = b[i] - acc;
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let dst = next[j];
                col_indices[dst] = i;
                values[dst] = v;
                next[j] += 1;
            }
        }
        Self::from_parts_unchecked(self.n_cols, self.n_rows, row_offsets, col_indices, values)
    }

    /// Sparse product `self * rhs` (row-by-row Gustavson). Every computed entry
    /// is kept, including exact cancellations.
    pub fn matmul(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let n_out = rhs.n_cols;
        let mut marker = vec![usize::MAX; n_out];
        let mut accum = vec![0.0; n_out];
        let mut row_cols: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();

        for i in 0..self.n_rows {
            row_cols.clear();
            let (a_cols, a_vals) = self.row(i);
            for (&k, &a_ik) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = rhs.row(k);
                for (&j, &b_kj) in b_cols.iter().zip(b_vals) {
                    if marker[j] != i {
                        marker[j] = i;
                        accum[j] = a_ik * b_kj;
                        row_cols.push(j);
                    } else {
                        accum[j] += a_ik * b_kj;
                    }
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                col_indices.push(j);
                values.push(accum[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            n_out,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// `alpha * self + beta * other` over the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "add: {}x{} plus {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let take_a = q == bc.len() || (p < ac.len() && ac[p] < bc[q]);
                let take_b = p == ac.len() || (q < bc.len() && bc[q] < ac[p]);
                if take_a {
                    col_indices.push(ac[p]);
                    values.push(alpha * av[p]);
                    p += 1;
                } else if take_b {
                    col_indices.push(bc[q]);
                    values.push(beta * bv[q]);
                    q += 1;
                } else {
                    col_indices.push(ac[p]);
                    values.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            self.n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// `(A + Aᵀ) / 2`, symmetric bit for bit.
    pub fn symmetrized(&self) -> Result<SparseMatrix> {
        self.add_scaled(0.5, &self.transpose(), 0.5)
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern (absent entries count as 0).
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut defect: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let vt = self.get(j, i).unwrap_or(0.0);
                defect = defect.max((v - vt).abs());
            }
        }
        defect
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric up to `rel_tol * max|a_ij|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.n_rows == self.n_cols && self.symmetry_defect() <= rel_tol * self.max_abs()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                dense.set(i, j, v);
            }
        }
        dense
    }

    /// Sum of `|a_ij|` per row.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .collect()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Returns `D_left * self * D_right` for diagonal scalings given as vectors.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.values[k] *= left[i] * right[self.col_indices[k]];
            }
        }
        out
    }

    /// Applies `f` to each stored (row, col, value), keeping the pattern.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SparseMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.values[k] = f(i, self.col_indices[k], self.values[k]);
            }
        }
        out
    }
}

/// Galerkin triple product `Pᵀ A P`.
pub fn triple_product(p: &SparseMatrix, a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_rows != a.n_cols || p.n_rows != a.n_rows {
        return Err(Error::DimensionMismatch(format!(
            "triple_product: P is {}x{}, A is {}x{}",
            p.n_rows, p.n_cols, a.n_rows, a.n_cols
        )));
    }
    let ap = a.matmul(p)?;
    p.transpose().matmul(&ap)
}
