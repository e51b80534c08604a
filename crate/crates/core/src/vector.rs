//! Dense vector kernels. Vectors are plain `[f64]` slices.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `uᵀ A u`.
pub fn a_inner(a: &SparseMatrix, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != a.n_cols() || v.len() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "A-inner product: {}x{} matrix with vectors of length {} and {}",
            a.n_rows(),
            a.n_cols(),
            u.len(),
            v.len()
        )));
    }
    let mut acc = 0.0;
    for (i, vi) in v.iter().enumerate() {
        let (cols, vals) = a.row(i);
        let mut row = 0.0;
        for (&j, &aij) in cols.iter().zip(vals) {
            row += aij * u[j];
        }
        acc += vi * row;
    }
    Ok(acc)
}

/// `sqrt(uᵀ A u)`; a negative quadratic form is reported as an error.
pub fn a_norm(a: &SparseMatrix, u: &[f64]) -> Result<f64> {
    let q = a_inner(a, u, u)?;
    if q < 0.0 {
        return Err(Error::NotPositiveDefinite(q));
    }
    Ok(q.sqrt())
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = x + beta * y`.
#[inline]
pub fn xpby(x: &[f64], beta: f64, y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi + beta * *yi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Scales `x` to unit euclidean norm and returns the old norm. Zero vectors
/// are left untouched.
pub fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        scale(1.0 / n, x);
    }
    n
}
