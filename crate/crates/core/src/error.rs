use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index out of bounds: ({row}, {col}) in {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("matrix not positive definite on this vector (v^T A v = {0:e})")]
    NotPositiveDefinite(f64),

    #[error("dense factorization failed: leading minor {0} is not positive")]
    FactorizationFailed(usize),

    #[error("nonpositive diagonal entry {value:e} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("smoother not s.p.d.")]
    SmootherNotSpd,

    #[error("all-zero candidate column {0}")]
    ZeroCandidate(usize),

    #[error("matrix not coarsenable with given candidates")]
    NotCoarsenable,

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("input is not column-orthonormal (Gram deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("stationary iteration diverged at iteration {iter} (relative residual {relres:e})")]
    Diverged { iter: usize, relres: f64 },

    #[error("matrix or preconditioner not s.p.d. (p^T A p = {0:e})")]
    PcgBreakdown(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
