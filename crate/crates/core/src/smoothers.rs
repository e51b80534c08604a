//! Relaxation methods: the s.p.d. base solvers for the composite and the
//! level smoothers inside μ-cycles.

use serde::{Deserialize, Serialize};

use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{Error, Result};
use crate::operator::{power_method_op, FnOperator};
use crate::sparse::SparseMatrix;

pub const DEFAULT_OMEGA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    L1Jacobi,
    ForwardGs,
    BackwardGs,
    SymmetricGs,
    WeightedJacobi,
    BlockJacobi,
}

impl SmootherKind {
    /// The kind whose implicit matrix is the transpose of this one's.
    pub fn transposed(self) -> SmootherKind {
        match self {
            SmootherKind::ForwardGs => SmootherKind::BackwardGs,
            SmootherKind::BackwardGs => SmootherKind::ForwardGs,
            other => other,
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, SmootherKind::ForwardGs | SmootherKind::BackwardGs)
    }
}

impl std::str::FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "l1" | "l1_jacobi" => SmootherKind::L1Jacobi,
            "forward_gs" => SmootherKind::ForwardGs,
            "backward_gs" => SmootherKind::BackwardGs,
            "symmetric_gs" | "sgs" => SmootherKind::SymmetricGs,
            "jacobi" | "weighted_jacobi" => SmootherKind::WeightedJacobi,
            "block_jacobi" => SmootherKind::BlockJacobi,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown smoother '{other}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone)]
struct DenseBlock {
    start: usize,
    matrix: DenseMatrix,
    factor: Cholesky,
}

#[derive(Debug, Clone)]
pub struct SmootherState {
    kind: SmootherKind,
    /// ℓ1 row sums for `L1Jacobi`, the diagonal otherwise.
    diag_data: Vec<f64>,
    blocks: Vec<DenseBlock>,
    omega: f64,
}

/// Contiguous blocks of `block_size` rows; the last one may be shorter.
pub fn uniform_block_offsets(n: usize, block_size: usize) -> Vec<usize> {
    let bs = block_size.max(1);
    let mut offsets: Vec<usize> = (0..n).step_by(bs).collect();
    offsets.push(n);
    offsets
}

impl SmootherState {
    /// Builds a smoother. `block_size` is only used by `BlockJacobi`
    /// (default 1); weighted Jacobi uses ω = 2/3.
    pub fn new(a: &SparseMatrix, kind: SmootherKind, block_size: Option<usize>) -> Result<Self> {
        match kind {
            SmootherKind::BlockJacobi => {
                let offsets = uniform_block_offsets(a.n_rows(), block_size.unwrap_or(1));
                Self::block_jacobi(a, &offsets)
            }
            SmootherKind::WeightedJacobi => Self::weighted_jacobi(a, DEFAULT_OMEGA),
            _ => Self::build(a, kind, DEFAULT_OMEGA, &[]),
        }
    }

    pub fn weighted_jacobi(a: &SparseMatrix, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "jacobi weight must lie in (0, 2), got {omega}"
            )));
        }
        Self::build(a, SmootherKind::WeightedJacobi, omega, &[])
    }

    /// Block Jacobi over the blocks `offsets[k]..offsets[k+1]`. Each diagonal
    /// block is augmented with the absolute row sums of its off-block
    /// couplings (ℓ1 compensation), which makes the smoother dominate `A`.
    pub fn block_jacobi(a: &SparseMatrix, offsets: &[usize]) -> Result<Self> {
        if offsets.first() != Some(&0) || offsets.last() != Some(&a.n_rows()) {
            return Err(Error::InvalidParameter(
                "block offsets must start at 0 and end at n".into(),
            ));
        }
        Self::build(a, SmootherKind::BlockJacobi, 1.0, offsets)
    }

    fn build(a: &SparseMatrix, kind: SmootherKind, omega: f64, offsets: &[usize]) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::DimensionMismatch(
                "smoother needs a square matrix".into(),
            ));
        }
        let diag = a.diagonal();
        if let Some((row, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::NonPositiveDiagonal { row, value });
        }
        let diag_data = match kind {
            SmootherKind::L1Jacobi => a.row_abs_sums(),
            _ => diag,
        };
        let mut blocks = Vec::new();
        if kind == SmootherKind::BlockJacobi {
            for w in offsets.windows(2) {
                let (start, end) = (w[0], w[1]);
                if start >= end {
                    return Err(Error::InvalidParameter("empty smoother block".into()));
                }
                let size = end - start;
                let mut block = DenseMatrix::zeros(size, size);
                for i in start..end {
                    let (cols, vals) = a.row(i);
                    let mut off_block = 0.0;
                    for (&j, &v) in cols.iter().zip(vals) {
                        if (start..end).contains(&j) {
                            block.set(i - start, j - start, v);
                        } else {
                            off_block += v.abs();
                        }
                    }
                    let d = block.get(i - start, i - start);
                    block.set(i - start, i - start, d + off_block);
                }
                let factor = block.cholesky()?;
                blocks.push(DenseBlock {
                    start,
                    matrix: block,
                    factor,
                });
            }
        }
        Ok(Self {
            kind,
            diag_data,
            blocks,
            omega,
        })
    }

    pub fn kind(&self) -> SmootherKind {
        self.kind
    }

    pub fn diag_data(&self) -> &[f64] {
        &self.diag_data
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn dim(&self) -> usize {
        self.diag_data.len()
    }

    /// `x ← x + B⁻¹(b − A x)`, `sweeps` times.
    pub fn apply(&self, a: &SparseMatrix, b: &[f64], x: &mut [f64], sweeps: usize) {
        self.apply_kind(self.kind, a, b, x, sweeps);
    }

    /// Same as [`apply`](Self::apply) with `Bᵀ` in place of `B`.
    pub fn apply_transpose(&self, a: &SparseMatrix, b: &[f64], x: &mut [f64], sweeps: usize) {
        self.apply_kind(self.kind.transposed(), a, b, x, sweeps);
    }

    fn apply_kind(
        &self,
        kind: SmootherKind,
        a: &SparseMatrix,
        b: &[f64],
        x: &mut [f64],
        sweeps: usize,
    ) {
        debug_assert_eq!(b.len(), self.dim());
        debug_assert_eq!(x.len(), self.dim());
        if sweeps == 0 {
            return;
        }
        let n = self.dim();
        let mut r = match kind {
            SmootherKind::L1Jacobi | SmootherKind::WeightedJacobi | SmootherKind::BlockJacobi => {
                vec![0.0; n]
            }
            _ => Vec::new(),
        };
        for _ in 0..sweeps {
            match kind {
                SmootherKind::L1Jacobi => {
                    a.residual_into(b, x, &mut r);
                    for ((xi, ri), di) in x.iter_mut().zip(&r).zip(&self.diag_data) {
                        *xi += ri / di;
                    }
                }
                SmootherKind::WeightedJacobi => {
                    a.residual_into(b, x, &mut r);
                    for ((xi, ri), di) in x.iter_mut().zip(&r).zip(&self.diag_data) {
                        *xi += self.omega * ri / di;
                    }
                }
                SmootherKind::BlockJacobi => {
                    a.residual_into(b, x, &mut r);
                    for blk in &self.blocks {
                        let size = blk.factor.dim();
                        let rb = &mut r[blk.start..blk.start + size];
                        blk.factor.solve_in_place(rb);
                        for (xi, ci) in x[blk.start..blk.start + size].iter_mut().zip(rb.iter()) {
                            *xi += ci;
                        }
                    }
                }
                SmootherKind::ForwardGs => self.gs_sweep(a, b, x, 0..n),
                SmootherKind::BackwardGs => self.gs_sweep(a, b, x, (0..n).rev()),
                SmootherKind::SymmetricGs => {
                    self.gs_sweep(a, b, x, 0..n);
                    self.gs_sweep(a, b, x, (0..n).rev());
                }
            }
        }
    }

    fn gs_sweep(
        &self,
        a: &SparseMatrix,
        b: &[f64],
        x: &mut [f64],
        order: impl Iterator<Item = usize>,
    ) {
        for i in order {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                s -= v * x[j];
            }
            x[i] += s / self.diag_data[i];
        }
    }

    /// Multiplies by the smoother's implicit matrix `B`, for norm estimates.
    fn apply_b(&self, a: &SparseMatrix, x: &[f64], y: &mut [f64]) -> Result<()> {
        match self.kind {
            SmootherKind::L1Jacobi => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.diag_data) {
                    *yi = di * xi;
                }
            }
            SmootherKind::WeightedJacobi => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.diag_data) {
                    *yi = di * xi / self.omega;
                }
            }
            SmootherKind::BlockJacobi => {
                for blk in &self.blocks {
                    let size = blk.matrix.n_rows();
                    for i in 0..size {
                        y[blk.start + i] = (0..size)
                            .map(|j| blk.matrix.get(i, j) * x[blk.start + j])
                            .sum();
                    }
                }
            }
            SmootherKind::SymmetricGs => {
                // B = (D + L) D⁻¹ (D + U)
                let n = self.dim();
                let mut t = vec![0.0; n];
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    t[i] = cols
                        .iter()
                        .zip(vals)
                        .filter(|(&j, _)| j >= i)
                        .map(|(&j, &v)| v * x[j])
                        .sum::<f64>()
                        / self.diag_data[i];
                }
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    y[i] = cols
                        .iter()
                        .zip(vals)
                        .filter(|(&j, _)| j <= i)
                        .map(|(&j, &v)| v * t[j])
                        .sum();
                }
            }
            SmootherKind::ForwardGs | SmootherKind::BackwardGs => {
                return Err(Error::SmootherNotSpd)
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    /// `‖B‖`, exact for ℓ1 and weighted Jacobi.
    pub smoother_norm: f64,
    /// Power-method estimate of `‖A‖`.
    pub matrix_norm: f64,
    /// `‖B‖ / ‖A‖`.
    pub norm_ratio: f64,
}

const NORM_TOL: f64 = 1e-6;
const NORM_MAX_ITER: usize = 5000;

/// `‖B‖` and the ratio `‖B‖ / ‖A‖` for an s.p.d. smoother.
pub fn smoother_norm_bound(s: &SmootherState, a: &SparseMatrix) -> Result<NormBound> {
    if !s.kind.is_symmetric() {
        return Err(Error::SmootherNotSpd);
    }
    let smoother_norm = match s.kind {
        SmootherKind::L1Jacobi => s.diag_data.iter().fold(0.0, |m: f64, d| m.max(*d)),
        SmootherKind::WeightedJacobi => {
            s.diag_data.iter().fold(0.0, |m: f64, d| m.max(*d)) / s.omega
        }
        _ => {
            let op = FnOperator::new(s.dim(), |x: &[f64], y: &mut [f64]| {
                s.apply_b(a, x, y)
                    .expect("symmetric kinds have an explicit B")
            });
            power_method_op(&op, NORM_TOL, NORM_MAX_ITER).value
        }
    };
    let matrix_norm = power_method_op(a, NORM_TOL, NORM_MAX_ITER).value;
    Ok(NormBound {
        smoother_norm,
        matrix_norm,
        norm_ratio: smoother_norm / matrix_norm,
    })
}
