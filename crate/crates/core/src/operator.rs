//! Linear operators and the power method used to estimate operator norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::vector::{dot, norm, scale};

/// A square linear map on `R^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = Op x`. `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
}

/// Operator given by a closure.
pub struct FnOperator<F: Fn(&[f64], &mut [f64])> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    /// Estimate of the largest eigenvalue magnitude.
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before the residual test passed; `value`
    /// is then the last Rayleigh quotient.
    pub converged: bool,
}

const POWER_SEED: u64 = 0x00c0_ffee;

/// Power iteration on a symmetric matrix.
pub fn power_method(a: &SparseMatrix, tol: f64, max_iter: usize) -> Result<PowerEstimate> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch(
            "power method needs a square matrix".into(),
        ));
    }
    Ok(power_method_op(a, tol, max_iter))
}

/// Power iteration on a symmetric operator with a fixed-seed start vector.
///
/// Stops once the eigen-residual `‖Op x - θ x‖` falls below `tol·|θ|`, which
/// places `θ` within relative distance `tol` of an eigenvalue.
pub fn power_method_op<Op: LinearOperator + ?Sized>(
    op: &Op,
    tol: f64,
    max_iter: usize,
) -> PowerEstimate {
    let n = op.dim();
    if n == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    scale(1.0 / norm(&x), &mut x);
    let mut y = vec![0.0; n];
    let mut theta = 0.0;
    for it in 1..=max_iter.max(1) {
        op.apply(&x, &mut y);
        theta = dot(&x, &y);
        let res = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (yi - theta * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        let ynorm = norm(&y);
        if ynorm == 0.0 {
            return PowerEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        if res <= tol * theta.abs() {
            return PowerEstimate {
                value: theta.abs(),
                iterations: it,
                converged: true,
            };
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ynorm;
        }
    }
    log::warn!("power method did not converge in {max_iter} iterations");
    PowerEstimate {
        value: theta.abs(),
        iterations: max_iter,
        converged: false,
    }
}
