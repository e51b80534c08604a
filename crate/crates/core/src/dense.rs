//! Small dense matrices: candidate blocks and coarsest-level factorizations.

use crate::error::{Error, Result};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_col_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Builds from equal-length columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::DimensionMismatch("columns differ in length".into()));
        }
        Ok(Self {
            n_rows,
            n_cols: columns.len(),
            values: columns.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.n_rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_cols).map(move |j| self.column(j))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `selfᵀ * other`.
    pub fn transpose_mul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "transpose_mul: {} rows vs {} rows",
                self.n_rows, other.n_rows
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for i in 0..self.n_cols {
            for j in 0..other.n_cols {
                out.set(i, j, crate::vector::dot(self.column(i), other.column(j)));
            }
        }
        Ok(out)
    }

    pub fn mul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "mul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for j in 0..other.n_cols {
            for k in 0..self.n_cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                for i in 0..self.n_rows {
                    out.values[j * self.n_rows + i] += self.get(i, k) * b;
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Selects the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            out.column_mut(k).copy_from_slice(self.column(j));
        }
        out
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // column-major L
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::DimensionMismatch(
                "Cholesky of non-square matrix".into(),
            ));
        }
        let n = a.n_rows;
        let mut l = a.values.clone();
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[k * n + j] * l[k * n + j];
            }
            if !(d > 0.0) {
                return Err(Error::FactorizationFailed(j));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = l[j * n + i];
                for k in 0..j {
                    s -= l[k * n + i] * l[k * n + j];
                }
                l[j * n + i] = s / d;
            }
            for i in 0..j {
                l[j * n + i] = 0.0;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for j in 0..n {
            x[j] /= l[j * n + j];
            let xj = x[j];
            for i in j + 1..n {
                x[i] -= l[j * n + i] * xj;
            }
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for i in j + 1..n {
                s -= l[j * n + i] * x[i];
            }
            x[j] = s / l[j * n + j];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn lower(&self) -> DenseMatrix {
        DenseMatrix {
            n_rows: self.n,
            n_cols: self.n,
            values: self.lower.clone(),
        }
    }
}
