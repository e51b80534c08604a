//! Test-matrix generators: anisotropic diffusion with bilinear/trilinear
//! elements on a uniform Cartesian grid, and finite-difference Laplacians.
//!
//! Stiffness matrices are assembled on the reference element (no `h`
//! scaling) with homogeneous Dirichlet boundary nodes eliminated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyParams {
    /// Diffusivity across the dominant direction.
    pub epsilon: f64,
    pub theta: f64,
    /// Elevation angle; ignored in 2-D.
    pub phi: f64,
    /// Cells per axis.
    pub n: usize,
}

impl Default for AnisotropyParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            theta: 0.0,
            phi: 0.0,
            n: 32,
        }
    }
}

impl AnisotropyParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 cells per axis, got {}",
                self.n
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Dominant direction `β`.
    pub fn direction(&self, dim: usize) -> Vec<f64> {
        match dim {
            2 => vec![self.theta.cos(), self.theta.sin()],
            _ => vec![
                self.theta.cos() * self.phi.cos(),
                self.theta.sin() * self.phi.cos(),
                self.phi.sin(),
            ],
        }
    }

    /// Diffusion tensor `K = εI + ββᵀ`, row-major.
    pub fn tensor(&self, dim: usize) -> Vec<Vec<f64>> {
        let beta = self.direction(dim);
        (0..dim)
            .map(|p| {
                (0..dim)
                    .map(|q| beta[p] * beta[q] + if p == q { self.epsilon } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

// 1-D linear shape-function integrals on [0, 1]:
// ∫N_a' N_b', ∫N_a' N_b, ∫N_a N_b.
const STIFF_1D: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];
const MIXED_1D: [[f64; 2]; 2] = [[-0.5, -0.5], [0.5, 0.5]];
const MASS_1D: [[f64; 2]; 2] = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];

/// Element stiffness matrix `∫ ∇φ_aᵀ K ∇φ_b` of the tensor-product linear
/// element on the unit box; local node `a` has coordinate bit `k` along axis `k`.
pub fn element_stiffness(k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = k.len();
    let n_loc = 1 << dim;
    let bit = |a: usize, axis: usize| (a >> axis) & 1;
    let mut ke = vec![vec![0.0; n_loc]; n_loc];
    for a in 0..n_loc {
        for b in a..n_loc {
            let mut sum = 0.0;
            for p in 0..dim {
                for q in 0..dim {
                    let mut term = k[p][q];
                    for axis in 0..dim {
                        let (ia, ib) = (bit(a, axis), bit(b, axis));
                        term *= if axis == p && axis == q {
                            STIFF_1D[ia][ib]
                        } else if axis == p {
                            MIXED_1D[ia][ib]
                        } else if axis == q {
                            MIXED_1D[ib][ia]
                        } else {
                            MASS_1D[ia][ib]
                        };
                    }
                    sum += term;
                }
            }
            ke[a][b] = sum;
            ke[b][a] = sum;
        }
    }
    ke
}

fn assemble(dim: usize, n: usize, ke: &[Vec<f64>]) -> Result<SparseMatrix> {
    let m = n - 1;
    let n_unknowns = m.pow(dim as u32);
    let n_loc = 1 << dim;
    let n_elems = n.pow(dim as u32);
    let mut triplets = Vec::with_capacity(n_elems * n_loc * n_loc);
    let mut global = vec![None; n_loc];
    for e in 0..n_elems {
        let mut origin = [0usize; 3];
        let mut rest = e;
        for o in origin.iter_mut().take(dim) {
            *o = rest % n;
            rest /= n;
        }
        for (a, g) in global.iter_mut().enumerate() {
            let mut idx = 0;
            let mut stride = 1;
            let mut interior = true;
            for (axis, o) in origin.iter().enumerate().take(dim) {
                let node = o + ((a >> axis) & 1);
                if node == 0 || node == n {
                    interior = false;
                    break;
                }
                idx += (node - 1) * stride;
                stride *= m;
            }
            *g = interior.then_some(idx);
        }
        for a in 0..n_loc {
            let Some(ga) = global[a] else { continue };
            for b in 0..n_loc {
                if let Some(gb) = global[b] {
                    triplets.push((ga, gb, ke[a][b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n_unknowns, n_unknowns, &triplets)
}

/// Bilinear-element stiffness matrix of `-∇·(K∇u)` on the unit square,
/// `(n-1)²` unknowns ordered x-fastest.
pub fn gen_anisotropic_2d(p: &AnisotropyParams) -> Result<SparseMatrix> {
    p.validate()?;
    assemble(2, p.n, &element_stiffness(&p.tensor(2)))
}

/// Trilinear-element stiffness matrix on the unit cube, `(n-1)³` unknowns.
pub fn gen_anisotropic_3d(p: &AnisotropyParams) -> Result<SparseMatrix> {
    p.validate()?;
    assemble(3, p.n, &element_stiffness(&p.tensor(3)))
}

/// Unscaled 3-point (dim 1) or 5-point (dim 2) Dirichlet Laplacian with
/// `n - 1` unknowns per axis.
pub fn gen_laplace(n: usize, dim: usize) -> Result<SparseMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    let m = n - 1;
    let mut triplets = Vec::new();
    match dim {
        1 => {
            for i in 0..m {
                if i > 0 {
                    triplets.push((i, i - 1, -1.0));
                }
                triplets.push((i, i, 2.0));
                if i + 1 < m {
                    triplets.push((i, i + 1, -1.0));
                }
            }
            SparseMatrix::from_triplets(m, m, &triplets)
        }
        2 => {
            let idx = |x: usize, y: usize| y * m + x;
            for y in 0..m {
                for x in 0..m {
                    let i = idx(x, y);
                    if y > 0 {
                        triplets.push((i, idx(x, y - 1), -1.0));
                    }
                    if x > 0 {
                        triplets.push((i, idx(x - 1, y), -1.0));
                    }
                    triplets.push((i, i, 4.0));
                    if x + 1 < m {
                        triplets.push((i, idx(x + 1, y), -1.0));
                    }
                    if y + 1 < m {
                        triplets.push((i, idx(x, y + 1), -1.0));
                    }
                }
            }
            SparseMatrix::from_triplets(m * m, m * m, &triplets)
        }
        _ => Err(Error::InvalidParameter(format!(
            "laplacian dimension must be 1 or 2, got {dim}"
        ))),
    }
}

/// Constant unit load vector.
pub fn rhs_ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_2_1_stencil_by_hand() {
        // K = diag(2, 1); assembled stencil: center 4, x-neighbours -1,
        // y-neighbours 0, corners -1/2.
        let p = AnisotropyParams {
            epsilon: 1.0,
            theta: 0.0,
            phi: 0.0,
            n: 3,
        };
        let a = gen_anisotropic_2d(&p).unwrap().to_dense();
        // unknowns (1,1),(2,1),(1,2),(2,2) -> 0,1,2,3
        let expected = [
            [4.0, -1.0, 0.0, -0.5],
            [-1.0, 4.0, -0.5, 0.0],
            [0.0, -0.5, 4.0, -1.0],
            [-0.5, 0.0, -1.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (a.get(i, j) - expected[i][j]).abs() < 1e-14,
                    "({i},{j}): {} vs {}",
                    a.get(i, j),
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn theta_and_theta_plus_pi_agree() {
        let p = AnisotropyParams {
            epsilon: 1e-3,
            theta: 0.4,
            phi: 0.0,
            n: 6,
        };
        let q = AnisotropyParams {
            theta: 0.4 + std::f64::consts::PI,
            ..p
        };
        let a = gen_anisotropic_2d(&p).unwrap();
        let b = gen_anisotropic_2d(&q).unwrap();
        assert_eq!(a.col_indices(), b.col_indices());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn laplace_stencils() {
        let a = gen_laplace(3, 1).unwrap().to_dense();
        assert_eq!(a.values(), &[2.0, -1.0, -1.0, 2.0]);
        let b = gen_laplace(3, 2).unwrap();
        assert_eq!(b.n_rows(), 4);
        assert_eq!(b.diagonal(), vec![4.0; 4]);
        assert_eq!(b.get(0, 1), Some(-1.0));
        assert_eq!(b.get(0, 2), Some(-1.0));
        assert_eq!(b.get(0, 3), None);
        // interior rows sum to zero, rows next to the eliminated boundary are positive
        for a in [gen_laplace(7, 1).unwrap(), gen_laplace(7, 2).unwrap()] {
            let sums: Vec<f64> = (0..a.n_rows()).map(|i| a.row(i).1.iter().sum()).collect();
            assert!(sums.iter().all(|&s| s >= 0.0));
            assert!(sums[0] > 0.0);
            assert!(sums.iter().sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(gen_laplace(1, 1).is_err());
        assert!(gen_laplace(4, 3).is_err());
        let p = AnisotropyParams {
            n: 1,
            ..Default::default()
        };
        assert!(gen_anisotropic_2d(&p).is_err());
        assert!(gen_anisotropic_3d(&p).is_err());
    }

    #[test]
    fn isotropic_3d_interior_rows_identical() {
        let p = AnisotropyParams {
            epsilon: 1.0,
            theta: 0.0,
            phi: 0.0,
            n: 5,
        };
        let a = gen_anisotropic_3d(&p).unwrap();
        assert_eq!(a.n_rows(), 64);
        // interior unknowns (all coordinates in 1..=2 of 0..=3) have full 27-point rows
        let m = 4;
        let mut reference: Option<Vec<f64>> = None;
        for z in 1..3 {
            for y in 1..3 {
                for x in 1..3 {
                    let row = a.row(x + m * (y + m * z)).1.to_vec();
                    assert_eq!(row.len(), 27);
                    match &reference {
                        None => reference = Some(row),
                        Some(r) => assert_eq!(r, &row),
                    }
                }
            }
        }
    }
}
