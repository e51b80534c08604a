//! Adaptive composite algebraic multigrid.
//!
//! A base smoother is tested on `A x = 0`; the error it fails to reduce is
//! used to build a smoothed-aggregation hierarchy whose aggregates come from
//! modularity matching on a candidate-scaled strength graph. Hierarchies are
//! composed symmetrically with the base smoother, and the process repeats
//! until the composite reaches a target convergence factor.

pub mod checks;
pub mod coarsening;
pub mod composite;
pub mod dense;
pub mod error;
pub mod hierarchy;
pub mod operator;
pub mod probgen;
pub mod smoothers;
pub mod solve;
pub mod sparse;
pub mod vector;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use sparse::SparseMatrix;
