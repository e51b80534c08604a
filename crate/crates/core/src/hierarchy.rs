//! Smoothed-aggregation hierarchies and μ-cycles.

use serde::{Deserialize, Serialize};

use crate::coarsening::{aggregate_with, Aggregation, CandidateCombine};
use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{Error, Result};
use crate::smoothers::{SmootherKind, SmootherState, DEFAULT_OMEGA};
use crate::sparse::{triple_product, SparseMatrix};

/// Columns whose residual after orthogonalization is at most this fraction of
/// their local norm are treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-12;

/// Coarse levels keeping more than this fraction of the fine dimension count
/// as stalled.
const STALL_RATIO: f64 = 0.9;

const MAX_LEVELS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyParams {
    /// Coarse visits per level: 1 is a V-cycle, 2 a W-cycle.
    pub mu: usize,
    /// Total smoothing sweeps per level, split between pre and post.
    pub nu: usize,
    /// Target coarsening factor `n / n_agg`.
    pub gamma: f64,
    /// Damping of the Jacobi step that smooths the tentative interpolation.
    pub omega: f64,
    /// Levels at or below this dimension are solved by dense Cholesky.
    pub coarse_size: usize,
    /// Use the tentative interpolation on the finest level.
    pub skip_finest_smoothing: bool,
    pub finest_smoother: SmootherKind,
    pub combine: CandidateCombine,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            mu: 1,
            nu: 2,
            gamma: 8.0,
            omega: DEFAULT_OMEGA,
            coarse_size: 64,
            skip_finest_smoothing: false,
            finest_smoother: SmootherKind::L1Jacobi,
            combine: CandidateCombine::Sum,
        }
    }
}

impl HierarchyParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 {
            return Err(Error::InvalidParameter("mu must be at least 1".into()));
        }
        if !(self.gamma >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "coarsening factor must be at least 2, got {}",
                self.gamma
            )));
        }
        if !(0.0..2.0).contains(&self.omega) {
            return Err(Error::InvalidParameter(format!(
                "interpolation smoothing weight must lie in [0, 2), got {}",
                self.omega
            )));
        }
        if self.coarse_size == 0 {
            return Err(Error::InvalidParameter(
                "coarse size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pre and post sweep counts.
    pub fn sweeps(&self) -> (usize, usize) {
        let pre = self.nu.div_ceil(2);
        (pre, self.nu - pre)
    }
}

/// Block interpolation with locally orthonormal columns.
#[derive(Debug, Clone)]
pub struct TentativeInterp {
    pub p: SparseMatrix,
    /// Coarse candidate block `R` with `P R = W`.
    pub coarse_candidates: DenseMatrix,
    /// Coarse dofs carried by each aggregate.
    pub dofs_per_aggregate: Vec<usize>,
    /// Candidate columns dropped as locally dependent, summed over aggregates.
    pub deficiency: usize,
}

impl TentativeInterp {
    /// Offsets of each nonempty aggregate's coarse dofs.
    pub fn coarse_blocks(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        for &k in self.dofs_per_aggregate.iter().filter(|&&k| k > 0) {
            offsets.push(offsets.last().unwrap() + k);
        }
        offsets
    }
}

/// Thin QR of `W` restricted to each aggregate (modified Gram-Schmidt with
/// one reorthogonalization pass). Coarse dofs are numbered aggregate by
/// aggregate.
pub fn tentative_interp(agg: &Aggregation, w: &DenseMatrix) -> Result<TentativeInterp> {
    let n = agg.n_vertices();
    if w.n_rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} candidate rows for {n} vertices",
            w.n_rows()
        )));
    }
    let n_cand = w.n_cols();
    let members = agg.members();
    let mut triplets = Vec::with_capacity(n * n_cand);
    let mut r_rows: Vec<Vec<f64>> = Vec::new();
    let mut dofs_per_aggregate = Vec::with_capacity(members.len());
    let mut deficiency = 0;
    for verts in &members {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut r_local: Vec<Vec<f64>> = Vec::new();
        for c in 0..n_cand {
            let col = w.column(c);
            let mut v: Vec<f64> = verts.iter().map(|&i| col[i]).collect();
            let local_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut coeffs = vec![0.0; basis.len()];
            for _ in 0..2 {
                for (q, coef) in basis.iter().zip(coeffs.iter_mut()) {
                    let h: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    *coef += h;
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= h * qi);
                }
            }
            let rest = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let independent =
                basis.len() < verts.len() && rest > DEPENDENCE_TOL * local_norm && rest > 0.0;
            for (row, coef) in r_local.iter_mut().zip(&coeffs) {
                row[c] = *coef;
            }
            if independent {
                v.iter_mut().for_each(|x| *x /= rest);
                basis.push(v);
                let mut row = vec![0.0; n_cand];
                row[c] = rest;
                r_local.push(row);
            } else {
                deficiency += 1;
            }
        }
        let offset = r_rows.len();
        for (k, q) in basis.iter().enumerate() {
            for (&i, &qi) in verts.iter().zip(q) {
                triplets.push((i, offset + k, qi));
            }
        }
        dofs_per_aggregate.push(basis.len());
        r_rows.extend(r_local);
    }
    let n_coarse = r_rows.len();
    let p = SparseMatrix::from_triplets(n, n_coarse, &triplets)?;
    let mut coarse_candidates = DenseMatrix::zeros(n_coarse, n_cand);
    for (i, row) in r_rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            coarse_candidates.set(i, c, v);
        }
    }
    Ok(TentativeInterp {
        p,
        coarse_candidates,
        dofs_per_aggregate,
        deficiency,
    })
}

/// `(I − ω D⁻¹ A) P`.
pub fn smooth_interp(a: &SparseMatrix, p: &SparseMatrix, omega: f64) -> Result<SparseMatrix> {
    if omega == 0.0 {
        return Ok(p.clone());
    }
    let diag = a.diagonal();
    if let Some((row, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::NonPositiveDiagonal { row, value });
    }
    let left: Vec<f64> = diag.iter().map(|d| omega / d).collect();
    let ap = a.matmul(p)?;
    let ones = vec![1.0; ap.n_cols()];
    p.add_scaled(1.0, &ap.scaled(&left, &ones), -1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub dim: usize,
    pub nnz: usize,
    /// Aggregates formed on this level (0 on the coarsest).
    pub aggregates: usize,
    pub deficiency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub levels: Vec<LevelSummary>,
    pub operator_complexity: f64,
}

#[derive(Debug, Clone)]
pub struct Level {
    pub operator: SparseMatrix,
    /// Candidate block living on this level.
    pub candidates: DenseMatrix,
    /// Smoother, interpolation and aggregation data; absent on the coarsest level.
    pub transfer: Option<Transfer>,
}

#[derive(Debug, Clone)]
pub struct Transfer {
    pub smoother: SmootherState,
    pub aggregation: Aggregation,
    pub tentative: TentativeInterp,
    /// Smoothed interpolation to the next level.
    pub interp: SparseMatrix,
    restrict: SparseMatrix,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    coarse_factor: Cholesky,
    params: HierarchyParams,
}

/// Builds a hierarchy whose interpolation reproduces the candidate columns.
pub fn build_hierarchy(
    a: &SparseMatrix,
    w: &DenseMatrix,
    params: &HierarchyParams,
) -> Result<Hierarchy> {
    params.validate()?;
    if a.n_rows() != a.n_cols() || w.n_rows() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "hierarchy: {}x{} matrix with {}-row candidates",
            a.n_rows(),
            a.n_cols(),
            w.n_rows()
        )));
    }
    let mut levels = Vec::new();
    let mut op = a.clone();
    let mut cand = w.clone();
    let mut initial: Option<Aggregation> = None;
    while op.n_rows() > params.coarse_size && levels.len() + 1 < MAX_LEVELS {
        let depth = levels.len();
        let outcome = aggregate_with(
            &op,
            &cand,
            params.gamma,
            initial.as_ref(),
            params.combine,
            |_| {},
        )?;
        let agg = outcome.aggregation;
        let tent = tentative_interp(&agg, &cand)?;
        let n_coarse = tent.p.n_cols();
        if n_coarse == 0 || n_coarse as f64 > STALL_RATIO * op.n_rows() as f64 {
            if depth == 0 {
                return Err(Error::NotCoarsenable);
            }
            log::debug!(
                "coarsening stalled at level {depth} ({} -> {n_coarse})",
                op.n_rows()
            );
            break;
        }
        let smoother = if depth == 0 {
            SmootherState::new(&op, params.finest_smoother, None)?
        } else {
            let blocks = initial
                .as_ref()
                .map(block_offsets)
                .unwrap_or_else(|| (0..=op.n_rows()).collect());
            SmootherState::block_jacobi(&op, &blocks)?
        };
        let omega = if depth == 0 && params.skip_finest_smoothing {
            0.0
        } else {
            params.omega
        };
        let interp = smooth_interp(&op, &tent.p, omega)?;
        let coarse = triple_product(&interp, &op)?;
        initial = Some(Aggregation::from_offsets(&tent.coarse_blocks())?);
        let next_cand = tent.coarse_candidates.clone();
        log::debug!(
            "level {depth}: {} rows, {} aggregates, {} coarse dofs",
            op.n_rows(),
            agg.n_agg(),
            n_coarse
        );
        let restrict = interp.transpose();
        levels.push(Level {
            operator: std::mem::replace(&mut op, coarse),
            candidates: std::mem::replace(&mut cand, next_cand),
            transfer: Some(Transfer {
                smoother,
                aggregation: agg,
                tentative: tent,
                interp,
                restrict,
            }),
        });
    }
    let coarse_factor = op.to_dense().cholesky()?;
    levels.push(Level {
        operator: op,
        candidates: cand,
        transfer: None,
    });
    Ok(Hierarchy {
        levels,
        coarse_factor,
        params: *params,
    })
}

/// Smoother blocks matching the starting aggregation of a coarse level: the
/// dofs of each parent aggregate are contiguous.
fn block_offsets(agg: &Aggregation) -> Vec<usize> {
    let mut offsets = vec![0];
    offsets.extend(agg.sizes().iter().scan(0, |acc, s| {
        *acc += s;
        Some(*acc)
    }));
    offsets
}

impl Hierarchy {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn params(&self) -> &HierarchyParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.levels[0].operator.n_rows()
    }

    /// Nonzeros of all level operators.
    pub fn total_nnz(&self) -> usize {
        self.levels.iter().map(|l| l.operator.nnz()).sum()
    }

    pub fn operator_complexity(&self) -> f64 {
        self.total_nnz() as f64 / self.levels[0].operator.nnz().max(1) as f64
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            levels: self
                .levels
                .iter()
                .map(|l| LevelSummary {
                    dim: l.operator.n_rows(),
                    nnz: l.operator.nnz(),
                    aggregates: l.transfer.as_ref().map_or(0, |t| t.aggregation.n_agg()),
                    deficiency: l.transfer.as_ref().map_or(0, |t| t.tentative.deficiency),
                })
                .collect(),
            operator_complexity: self.operator_complexity(),
        }
    }

    /// One μ-cycle from `x = 0`: returns `B⁻¹ b`.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.mu_cycle(0, b, &mut x, false);
        x
    }

    /// One cycle of the A-adjoint iteration, i.e. `B⁻ᵀ b`. Equal to
    /// [`apply`](Self::apply) when the sweep split is even and the level
    /// smoothers are symmetric.
    pub fn apply_adjoint(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.mu_cycle(0, b, &mut x, true);
        x
    }

    /// Whether the cycle is its own A-adjoint.
    pub fn is_symmetric(&self) -> bool {
        let (pre, post) = self.params.sweeps();
        let smoothers_symmetric = self.levels.iter().all(|l| {
            l.transfer
                .as_ref()
                .is_none_or(|t| t.smoother.kind().is_symmetric())
        });
        self.depth() == 1 || (pre == post && smoothers_symmetric)
    }

    /// Cycle on `level` updating `x`. The adjoint cycle swaps the pre and post
    /// sweep counts and uses transposed smoothers.
    pub fn mu_cycle(&self, level: usize, b: &[f64], x: &mut [f64], adjoint: bool) {
        let lvl = &self.levels[level];
        let Some(t) = &lvl.transfer else {
            x.copy_from_slice(b);
            self.coarse_factor.solve_in_place(x);
            return;
        };
        let a = &lvl.operator;
        let (mut pre, mut post) = self.params.sweeps();
        if adjoint {
            std::mem::swap(&mut pre, &mut post);
        }
        let smooth = |x: &mut [f64], sweeps: usize| {
            if adjoint {
                t.smoother.apply_transpose(a, b, x, sweeps)
            } else {
                t.smoother.apply(a, b, x, sweeps)
            }
        };
        smooth(x, pre);
        let mut r = vec![0.0; a.n_rows()];
        a.residual_into(b, x, &mut r);
        let mut rc = vec![0.0; t.restrict.n_rows()];
        t.restrict.mul_vec_into(&r, &mut rc);
        let mut xc = vec![0.0; rc.len()];
        for _ in 0..self.params.mu {
            self.mu_cycle(level + 1, &rc, &mut xc, adjoint);
        }
        t.interp.mul_vec_into(&xc, &mut r);
        x.iter_mut().zip(&r).for_each(|(xi, ci)| *xi += ci);
        smooth(x, post);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probgen::gen_laplace;
    use crate::vector::{a_norm, dot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones(n: usize) -> DenseMatrix {
        DenseMatrix::from_columns(&[vec![1.0; n]]).unwrap()
    }

    #[test]
    fn tentative_by_hand() {
        let agg = Aggregation::new(vec![0, 0, 1], 2).unwrap();
        let t = tentative_interp(&agg, &ones(3)).unwrap();
        let s = 0.5f64.sqrt();
        let d = t.p.to_dense();
        let expected = [s, s, 0.0, 0.0, 0.0, 1.0];
        for (x, y) in d.values().iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((t.coarse_candidates.get(0, 0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.coarse_candidates.get(1, 0), 1.0);
        assert_eq!(t.deficiency, 0);
    }

    #[test]
    fn tentative_reconstructs_and_flags_deficiency() {
        // second column is a multiple of the first on aggregate 0
        let w = DenseMatrix::from_columns(&[vec![1.0, 2.0, 3.0, 1.0], vec![2.0, 4.0, 1.0, -1.0]])
            .unwrap();
        let agg = Aggregation::new(vec![0, 0, 1, 1], 2).unwrap();
        let t = tentative_interp(&agg, &w).unwrap();
        assert_eq!(t.deficiency, 1);
        assert_eq!(t.dofs_per_aggregate, vec![1, 2]);
        let pr = t.p.to_dense().mul(&t.coarse_candidates).unwrap();
        assert!(pr.max_abs_diff(&w) <= 1e-12 * w.frobenius_norm());
        let gram = t.p.to_dense().transpose_mul(&t.p.to_dense()).unwrap();
        assert!(gram.max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn orthonormal_candidates_give_positive_triangular_r() {
        let w = DenseMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let agg = Aggregation::new(vec![0, 0], 1).unwrap();
        let t = tentative_interp(&agg, &w).unwrap();
        let r = &t.coarse_candidates;
        assert!(r.get(0, 0) > 0.0 && r.get(1, 1) > 0.0);
        assert_eq!(r.get(1, 0), 0.0);
    }

    #[test]
    fn smoothing_examples() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)],
        )
        .unwrap();
        let p = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let ps = smooth_interp(&a, &p, 2.0 / 3.0).unwrap();
        assert!((ps.get(0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((ps.get(1, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(smooth_interp(&a, &p, 0.0).unwrap(), p);
        let d = SparseMatrix::from_diagonal(&[3.0, 5.0]);
        let zero = smooth_interp(&d, &p, 1.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_matrix_is_single_level_direct_solve() {
        let a = gen_laplace(10, 1).unwrap();
        let h = build_hierarchy(&a, &ones(9), &HierarchyParams::default()).unwrap();
        assert_eq!(h.depth(), 1);
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let x = h.apply(&b);
        let r: Vec<f64> = a
            .spmv(&x)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(p, q)| p - q)
            .collect();
        assert!(dot(&r, &r).sqrt() <= 1e-10 * dot(&b, &b).sqrt());
    }

    fn laplace_params() -> HierarchyParams {
        HierarchyParams {
            gamma: 2.0,
            coarse_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn laplace_1d_hierarchy_shape() {
        let a = gen_laplace(65, 1).unwrap();
        let h = build_hierarchy(&a, &ones(64), &laplace_params()).unwrap();
        assert!(h.depth() >= 3, "depth {}", h.depth());
        assert!(h.operator_complexity() <= 3.0);
        for lvl in h.levels() {
            let oracle = nalgebra::DMatrix::from_column_slice(
                lvl.operator.n_rows(),
                lvl.operator.n_cols(),
                lvl.operator.to_dense().values(),
            );
            assert!(oracle.cholesky().is_some());
        }
        let json = serde_json::to_string(&h.summary()).unwrap();
        assert!(json.contains("operator_complexity"));
    }

    #[test]
    fn v_cycle_contracts() {
        let a = gen_laplace(65, 1).unwrap();
        let h = build_hierarchy(&a, &ones(64), &laplace_params()).unwrap();
        assert!(h.is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut e: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let zero = vec![0.0; 64];
        let start = a_norm(&a, &e).unwrap();
        let mut prev = start;
        for _ in 0..10 {
            h.mu_cycle(0, &zero, &mut e, false);
            let now = a_norm(&a, &e).unwrap();
            assert!(now <= prev * (1.0 + 1e-13));
            prev = now;
        }
        let factor = (prev / start).powf(0.1);
        assert!(factor < 0.5, "contraction {factor}");
    }

    #[test]
    fn symmetric_cycle_is_spd() {
        let a = gen_laplace(65, 1).unwrap();
        for mu in [1, 2] {
            let params = HierarchyParams {
                mu,
                ..laplace_params()
            };
            let h = build_hierarchy(&a, &ones(64), &params).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..5 {
                let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let defect = (dot(&u, &h.apply(&v)) - dot(&v, &h.apply(&u))).abs();
                assert!(defect <= 1e-10 * dot(&u, &u).sqrt() * dot(&v, &v).sqrt());
                assert!(dot(&u, &h.apply(&u)) > 0.0);
            }
            assert_eq!(h.apply(&[0.0; 64]), vec![0.0; 64]);
        }
    }

    #[test]
    fn odd_sweeps_adjoint_pairs_with_forward_cycle() {
        let a = gen_laplace(65, 1).unwrap();
        let params = HierarchyParams {
            nu: 1,
            ..laplace_params()
        };
        let h = build_hierarchy(&a, &ones(64), &params).unwrap();
        assert!(!h.is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = dot(&u, &h.apply(&v));
        let rhs = dot(&v, &h.apply_adjoint(&u));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn galerkin_matches_dense_product() {
        let a = gen_laplace(41, 1).unwrap();
        let h = build_hierarchy(&a, &ones(40), &laplace_params()).unwrap();
        let lv = h.levels();
        for pair in lv.windows(2) {
            let t = pair[0].transfer.as_ref().unwrap();
            let p = t.interp.to_dense();
            let dense = p
                .transpose()
                .mul(&pair[0].operator.to_dense())
                .unwrap()
                .mul(&p)
                .unwrap();
            let got = pair[1].operator.to_dense();
            assert!(got.max_abs_diff(&dense) <= 1e-12 * dense.frobenius_norm());
        }
    }

    #[test]
    fn uncoarsenable_is_reported() {
        // positive couplings make the strength graph all-negative
        let n = 80;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i, i + 1, 1.0));
                trip.push((i + 1, i, 1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &trip).unwrap();
        let err = build_hierarchy(&a, &ones(n), &HierarchyParams::default()).unwrap_err();
        assert!(matches!(err, Error::NotCoarsenable));
        assert_eq!(
            err.to_string(),
            "matrix not coarsenable with given candidates"
        );
    }
}
