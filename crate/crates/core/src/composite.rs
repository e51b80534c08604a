//! Symmetric composition of a base smoother with multigrid components, the
//! stall tester that exposes slow error, and the adaptive build loop.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, Hierarchy, HierarchyParams, HierarchySummary};
use crate::smoothers::{smoother_norm_bound, SmootherKind, SmootherState};
use crate::sparse::SparseMatrix;
use crate::vector::{a_norm, dot, norm};

/// `B⁻¹` realized by the sandwich `B_m … B_1 B_0 B_1 … B_m`.
///
/// The components on the first-applied side use the plain cycle and those on
/// the last-applied side its A-adjoint, so the composite is symmetric even
/// when individual cycles are not.
#[derive(Debug, Clone)]
pub struct CompositeSolver {
    a: SparseMatrix,
    base: SmootherState,
    components: Vec<Arc<Hierarchy>>,
}

impl CompositeSolver {
    pub fn new(a: &SparseMatrix, base: SmootherState) -> Result<Self> {
        if a.n_rows() != a.n_cols() || base.dim() != a.n_rows() {
            return Err(Error::DimensionMismatch(
                "base smoother does not match the matrix".into(),
            ));
        }
        if !base.kind().is_symmetric() {
            return Err(Error::SmootherNotSpd);
        }
        Ok(Self {
            a: a.clone(),
            base,
            components: Vec::new(),
        })
    }

    pub fn push(&mut self, h: Hierarchy) -> Result<()> {
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch(
                "component does not match the matrix".into(),
            ));
        }
        self.components.push(Arc::new(h));
        Ok(())
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn base(&self) -> &SmootherState {
        &self.base
    }

    pub fn components(&self) -> &[Arc<Hierarchy>] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.a.n_rows()
    }

    /// The composite made of the base and the first `k` components.
    pub fn truncated(&self, k: usize) -> CompositeSolver {
        CompositeSolver {
            a: self.a.clone(),
            base: self.base.clone(),
            components: self.components[..k.min(self.components.len())].to_vec(),
        }
    }

    /// `x ← x + B⁻¹(b − A x)`.
    pub fn step(&self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        let mut r = vec![0.0; n];
        let mut correct = |x: &mut [f64], comp: &Hierarchy, adjoint: bool| {
            self.a.residual_into(b, x, &mut r);
            let c = if adjoint {
                comp.apply_adjoint(&r)
            } else {
                comp.apply(&r)
            };
            x.iter_mut().zip(&c).for_each(|(xi, ci)| *xi += ci);
        };
        for comp in self.components.iter().rev() {
            correct(x, comp, false);
        }
        self.base.apply(&self.a, b, x, 1);
        for comp in &self.components {
            correct(x, comp, true);
        }
    }

    /// `B⁻¹ b`.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.step(b, &mut x);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TesterConfig {
    /// Maximum iterations `m` on `A x = 0`.
    pub iters: usize,
    /// A-norm ratio counted as stalled.
    pub stall_threshold: f64,
    /// Consecutive stalled steps before stopping early.
    pub stall_steps: usize,
    /// Steps between orthonormalizations when testing several vectors.
    pub ortho_period: usize,
}

impl Default for TesterConfig {
    fn default() -> Self {
        Self {
            iters: 20,
            stall_threshold: 0.999,
            stall_steps: 3,
            ortho_period: 5,
        }
    }
}

impl TesterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters < 2 {
            return Err(Error::InvalidParameter(format!(
                "tester needs at least 2 iterations, got {}",
                self.iters
            )));
        }
        if self.ortho_period == 0 {
            return Err(Error::InvalidParameter(
                "orthonormalization period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A-norm ratio at which an iterate is treated as annihilated.
const EXACT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterResult {
    /// Last A-norm reduction factor `‖x_m‖_A / ‖x_{m−1}‖_A`.
    pub rho: f64,
    /// Unit-length slow error `x_m / ‖x_m‖`; empty when `exact`.
    pub w: Vec<f64>,
    /// `‖x_s‖_A` for `s = 0..=m`.
    pub history: Vec<f64>,
    /// The solver annihilated the start vector in one step.
    pub exact: bool,
}

fn random_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Iterates `x ← (I − B⁻¹A) x` from a seeded random start until `m` steps or
/// a persistent stall, and returns the slowest error found.
pub fn tester(c: &CompositeSolver, cfg: &TesterConfig, seed: u64) -> Result<TesterResult> {
    tester_with_rng(c, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn tester_with_rng(
    c: &CompositeSolver,
    cfg: &TesterConfig,
    rng: &mut impl Rng,
) -> Result<TesterResult> {
    cfg.validate()?;
    let a = c.matrix();
    let zero = vec![0.0; c.dim()];
    let mut x = random_vector(rng, c.dim());
    let mut prev = x.clone();
    let start = a_norm(a, &x)?;
    let mut history = vec![start];
    let mut rho = 0.0;
    let mut stalled = 0;
    for s in 1..=cfg.iters {
        c.step(&zero, &mut x);
        let now = a_norm(a, &x)?;
        if now <= EXACT_FLOOR * start {
            history.push(now);
            if s == 1 {
                return Ok(TesterResult {
                    rho: 0.0,
                    w: Vec::new(),
                    history,
                    exact: true,
                });
            }
            // keep the last resolvable iterate
            x = prev;
            break;
        }
        rho = now / history[history.len() - 1];
        history.push(now);
        stalled = if rho >= cfg.stall_threshold {
            stalled + 1
        } else {
            0
        };
        if stalled >= cfg.stall_steps {
            break;
        }
        prev.copy_from_slice(&x);
    }
    let len = norm(&x);
    x.iter_mut().for_each(|v| *v /= len);
    Ok(TesterResult {
        rho,
        w: x,
        history,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `‖Aw‖² / (‖B‖ (1 − ρ²) ‖w‖²_A)`; at most 1 when the bound holds.
    pub margin: f64,
}

/// Slack allowed for rounding when deciding whether the bound holds.
pub const BOUND_SLACK: f64 = 1e-8;

/// Checks `‖Aw‖² ≤ ‖B‖ (1 − ρ²) ‖w‖²_A` for a slow error `w` of a solver
/// with reduction factor `ρ` and norm `‖B‖`.
pub fn slow_error_bound(
    a: &SparseMatrix,
    w: &[f64],
    rho: f64,
    smoother_norm: f64,
) -> Result<BoundCheck> {
    let aw = a.spmv(w)?;
    let energy = dot(w, &aw);
    if energy < 0.0 {
        return Err(Error::NotPositiveDefinite(energy));
    }
    let mut delta = 1.0 - rho * rho;
    if !(delta > 0.0) {
        log::warn!("reduction factor {rho} is not below 1; clamping the gap");
        delta = f64::EPSILON;
    }
    let margin = dot(&aw, &aw) / (smoother_norm * delta * energy);
    Ok(BoundCheck {
        holds: margin <= 1.0 + BOUND_SLACK,
        margin,
    })
}

/// Orthonormal slow-error block with the build step that produced each column.
#[derive(Debug, Clone, PartialEq)]
pub struct NearNullBasis {
    pub columns: DenseMatrix,
    pub provenance: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTesterResult {
    pub basis: NearNullBasis,
    /// Last A-norm ratio of each column, in column order.
    pub ratios: Vec<f64>,
    /// Largest ratio over the columns.
    pub rho: f64,
    /// Every column was annihilated.
    pub exact: bool,
    pub steps: usize,
}

/// Modified Gram-Schmidt on columns sorted by decreasing A-norm; columns that
/// vanish are dropped. Returns the kept columns and their source indices.
fn orthonormalize(cols: Vec<Vec<f64>>, a_norms: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&i, &j| a_norms[j].total_cmp(&a_norms[i]).then(i.cmp(&j)));
    let mut kept: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in order {
        if !(a_norms[i] > 0.0) {
            continue;
        }
        let mut v = cols[i].clone();
        let before = norm(&v);
        for _ in 0..2 {
            for (_, q) in &kept {
                let h = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= h * qi);
            }
        }
        let after = norm(&v);
        if after > EXACT_FLOOR * before {
            v.iter_mut().for_each(|x| *x /= after);
            kept.push((i, v));
        }
    }
    kept
}

/// Runs `n_vectors` tester chains in lockstep, orthonormalizing every
/// `ortho_period` steps and at the end. `origin` is recorded as the
/// provenance of every returned column.
pub fn multi_tester(
    c: &CompositeSolver,
    cfg: &TesterConfig,
    n_vectors: usize,
    origin: usize,
    rng: &mut impl Rng,
) -> Result<MultiTesterResult> {
    cfg.validate()?;
    if n_vectors == 0 {
        return Err(Error::InvalidParameter(
            "need at least one test vector".into(),
        ));
    }
    let a = c.matrix();
    let n = c.dim();
    let zero = vec![0.0; n];
    let mut cols: Vec<Vec<f64>> = (0..n_vectors).map(|_| random_vector(rng, n)).collect();
    let starts = cols
        .iter()
        .map(|x| a_norm(a, x))
        .collect::<Result<Vec<_>>>()?;
    let mut prev_norms = starts.clone();
    let mut ratios = vec![0.0; n_vectors];
    let mut stalled = 0;
    let mut steps = 0;
    loop {
        steps += 1;
        let mut norms = Vec::with_capacity(cols.len());
        for (k, x) in cols.iter_mut().enumerate() {
            c.step(&zero, x);
            let now = a_norm(a, x)?;
            let now = if now <= EXACT_FLOOR * starts[k.min(starts.len() - 1)] {
                0.0
            } else {
                now
            };
            ratios[k] = if prev_norms[k] > 0.0 {
                now / prev_norms[k]
            } else {
                0.0
            };
            norms.push(now);
        }
        let worst = ratios.iter().cloned().fold(0.0, f64::max);
        stalled = if worst >= cfg.stall_threshold {
            stalled + 1
        } else {
            0
        };
        let done = steps >= cfg.iters || stalled >= cfg.stall_steps;
        if steps % cfg.ortho_period == 0 || done {
            let kept = orthonormalize(std::mem::take(&mut cols), &norms);
            if kept.is_empty() {
                return Ok(MultiTesterResult {
                    basis: NearNullBasis {
                        columns: DenseMatrix::zeros(n, 0),
                        provenance: Vec::new(),
                    },
                    ratios: Vec::new(),
                    rho: 0.0,
                    exact: true,
                    steps,
                });
            }
            ratios = kept.iter().map(|(i, _)| ratios[*i]).collect();
            cols = kept.into_iter().map(|(_, v)| v).collect();
            prev_norms = cols
                .iter()
                .map(|x| a_norm(a, x))
                .collect::<Result<Vec<_>>>()?;
        } else {
            prev_norms = norms;
        }
        if done {
            break;
        }
    }
    let rho = ratios.iter().cloned().fold(0.0, f64::max);
    let provenance = vec![origin; cols.len()];
    Ok(MultiTesterResult {
        basis: NearNullBasis {
            columns: DenseMatrix::from_columns(&cols)?,
            provenance,
        },
        ratios,
        rho,
        exact: false,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOverlap {
    /// `‖QᵀW‖_* / cols(Q)`.
    pub score: f64,
    /// `‖Wᵀ q_i‖` for every column of `Q`.
    pub per_vector: Vec<f64>,
}

const ORTHONORMAL_TOL: f64 = 1e-8;

fn orthonormality_defect(m: &DenseMatrix) -> Result<f64> {
    let gram = m.transpose_mul(m)?;
    Ok(gram.max_abs_diff(&DenseMatrix::identity(m.n_cols())))
}

/// Overlap of the spans of two column-orthonormal blocks, from the nuclear
/// norm of `QᵀW`.
pub fn subspace_overlap(q: &DenseMatrix, w: &DenseMatrix) -> Result<SubspaceOverlap> {
    if q.n_rows() != w.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "blocks have {} and {} rows",
            q.n_rows(),
            w.n_rows()
        )));
    }
    for m in [q, w] {
        let defect = orthonormality_defect(m)?;
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    let m = q.transpose_mul(w)?;
    let per_vector = (0..m.n_rows())
        .map(|i| {
            (0..m.n_cols())
                .map(|j| m.get(i, j).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    // singular values directly: square roots of Gram eigenvalues would turn
    // roundoff-level zeros into errors of order 1e-8
    let mat = nalgebra::DMatrix::from_column_slice(m.n_rows(), m.n_cols(), m.values());
    let nuclear: f64 = if mat.is_empty() {
        0.0
    } else {
        mat.singular_values().sum()
    };
    Ok(SubspaceOverlap {
        score: if q.n_cols() == 0 {
            0.0
        } else {
            nuclear / q.n_cols() as f64
        },
        per_vector,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    /// Stop once the composite reduces the A-norm at least this fast.
    pub target_rho: f64,
    pub tester: TesterConfig,
    /// Candidate vectors per component.
    pub n_candidates: usize,
    pub hierarchy: HierarchyParams,
    pub max_components: usize,
    pub seed: u64,
    pub base: SmootherKind,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            target_rho: 0.1,
            tester: TesterConfig::default(),
            n_candidates: 1,
            hierarchy: HierarchyParams::default(),
            max_components: 10,
            seed: 0,
            base: SmootherKind::L1Jacobi,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_rho > 0.0 && self.target_rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target factor must lie in (0, 1), got {}",
                self.target_rho
            )));
        }
        if self.n_candidates == 0 {
            return Err(Error::InvalidParameter(
                "need at least one candidate".into(),
            ));
        }
        self.tester.validate()?;
        self.hierarchy.validate()
    }
}

/// One tester run of the build loop and the component built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStep {
    /// Components in the composite that was tested.
    pub components: usize,
    pub rho: f64,
    /// Bound ratio for the slowest candidate against the base smoother norm.
    pub bound_ratio: f64,
    pub exact: bool,
    pub tester_steps: usize,
    /// Hierarchy built from this step's candidates, if one was added.
    pub hierarchy: Option<HierarchySummary>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildLog {
    pub config: AdaptiveConfig,
    pub n: usize,
    pub nnz: usize,
    pub base_norm: f64,
    pub steps: Vec<BuildStep>,
    pub final_rho: f64,
    pub components: usize,
    pub complexity: f64,
}

impl BuildLog {
    /// Measured factors in build order.
    pub fn rho_sequence(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.rho).collect()
    }
}

/// Operator complexity per component: nonzeros of every level of every
/// component over `k · nnz(A)`; 1 for a composite without components.
pub fn composite_complexity(c: &CompositeSolver) -> f64 {
    let k = c.n_components();
    if k == 0 {
        return 1.0;
    }
    let total: usize = c.components().iter().map(|h| h.total_nnz()).sum();
    total as f64 / (k as f64 * c.matrix().nnz() as f64)
}

/// Grows a composite one hierarchy at a time, each built from the slow error
/// of the current composite, until the tester reports `ρ ≤ target_rho` or the
/// component budget is spent.
pub fn adaptive_build(
    a: &SparseMatrix,
    cfg: &AdaptiveConfig,
) -> Result<(CompositeSolver, BuildLog)> {
    cfg.validate()?;
    let base = SmootherState::new(a, cfg.base, None)?;
    let base_norm = smoother_norm_bound(&base, a)?.smoother_norm;
    let mut composite = CompositeSolver::new(a, base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = Vec::new();
    let final_rho = loop {
        let clock = Instant::now();
        let mut chain_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let test = multi_tester(
            &composite,
            &cfg.tester,
            cfg.n_candidates,
            composite.n_components(),
            &mut chain_rng,
        )?;
        let bound_ratio = if test.exact {
            0.0
        } else {
            slow_error_bound(a, test.basis.columns.column(0), test.ratios[0], base_norm)?.margin
        };
        log::info!(
            "{} components: rho {:.6}, bound ratio {:.3e}",
            composite.n_components(),
            test.rho,
            bound_ratio
        );
        let mut step = BuildStep {
            components: composite.n_components(),
            rho: test.rho,
            bound_ratio,
            exact: test.exact,
            tester_steps: test.steps,
            hierarchy: None,
            wall_time_s: 0.0,
        };
        let finished = test.exact
            || test.rho <= cfg.target_rho
            || composite.n_components() >= cfg.max_components;
        if !finished {
            let h = build_hierarchy(a, &test.basis.columns, &cfg.hierarchy)?;
            step.hierarchy = Some(h.summary());
            composite.push(h)?;
        }
        step.wall_time_s = clock.elapsed().as_secs_f64();
        steps.push(step);
        if finished {
            break test.rho;
        }
    };
    let log = BuildLog {
        config: *cfg,
        n: a.n_rows(),
        nnz: a.nnz(),
        base_norm,
        steps,
        final_rho,
        components: composite.n_components(),
        complexity: composite_complexity(&composite),
    };
    Ok((composite, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probgen::gen_laplace;

    fn l1(a: &SparseMatrix) -> SmootherState {
        SmootherState::new(a, SmootherKind::L1Jacobi, None).unwrap()
    }

    #[test]
    fn empty_sandwich_is_base_smoother() {
        let a = gen_laplace(9, 1).unwrap();
        let c = CompositeSolver::new(&a, l1(&a)).unwrap();
        let b: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 8];
        l1(&a).apply(&a, &b, &mut x, 1);
        assert_eq!(c.apply(&b), x);
    }

    #[test]
    fn exact_component_solves() {
        let a = gen_laplace(20, 1).unwrap();
        let w = DenseMatrix::from_columns(&[vec![1.0; 19]]).unwrap();
        let h = build_hierarchy(&a, &w, &HierarchyParams::default()).unwrap();
        assert_eq!(h.depth(), 1);
        let mut c = CompositeSolver::new(&a, l1(&a)).unwrap();
        c.push(h).unwrap();
        let b: Vec<f64> = (0..19).map(|i| 1.0 + i as f64).collect();
        let x = c.apply(&b);
        let r: Vec<f64> = a
            .spmv(&x)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(p, q)| p - q)
            .collect();
        assert!(norm(&r) <= 1e-12 * norm(&b));
    }

    #[test]
    fn tester_on_exact_and_diagonal_solvers() {
        let a = SparseMatrix::from_diagonal(&[1.0, 100.0]);
        let c = CompositeSolver::new(&a, l1(&a)).unwrap();
        let t = tester(&c, &TesterConfig::default(), 1).unwrap();
        assert!(t.exact);
        assert_eq!(t.rho, 0.0);
    }

    #[test]
    fn tester_is_monotone_and_bound_holds() {
        let a = gen_laplace(33, 1).unwrap();
        let base = l1(&a);
        let smoother_norm = smoother_norm_bound(&base, &a).unwrap().smoother_norm;
        let c = CompositeSolver::new(&a, base).unwrap();
        let t = tester(&c, &TesterConfig::default(), 5).unwrap();
        assert!(!t.exact);
        assert!((norm(&t.w) - 1.0).abs() < 1e-14);
        for pair in t.history.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-13));
        }
        let check = slow_error_bound(&a, &t.w, t.rho, smoother_norm).unwrap();
        assert!(check.holds, "margin {}", check.margin);
    }

    #[test]
    fn eigenvector_meets_bound() {
        // weighted Jacobi on a diagonal matrix: E = (1 − ω) I, every e_i is an
        // eigenvector with factor 1/2
        let a = SparseMatrix::from_diagonal(&[1.0, 2.0, 4.0]);
        let s = SmootherState::weighted_jacobi(&a, 0.5).unwrap();
        let smoother_norm = smoother_norm_bound(&s, &a).unwrap().smoother_norm;
        let check = slow_error_bound(&a, &[0.0, 1.0, 0.0], 0.5, smoother_norm).unwrap();
        assert!(check.holds);
        assert!(check.margin <= 1.0);
    }

    #[test]
    fn single_vector_multi_tester_matches_tester() {
        let a = gen_laplace(33, 1).unwrap();
        let c = CompositeSolver::new(&a, l1(&a)).unwrap();
        let cfg = TesterConfig::default();
        let t = tester(&c, &cfg, 9).unwrap();
        let m = multi_tester(&c, &cfg, 1, 0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let w = m.basis.columns.column(0);
        let diff = w
            .iter()
            .zip(&t.w)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert!((m.rho - t.rho).abs() < 1e-10);
    }

    #[test]
    fn multi_tester_finds_slow_plane() {
        // Jacobi weights taken from a rescaled diagonal make e1 and e2 slow
        // (factor 0.975) and e3, e4 fast (factor 0.5).
        let a = SparseMatrix::from_diagonal(&[1.0, 1.0, 100.0, 100.0]);
        let scaled = SparseMatrix::from_diagonal(&[20.0, 20.0, 100.0, 100.0]);
        let s = SmootherState::weighted_jacobi(&scaled, 0.5).unwrap();
        let c = CompositeSolver::new(&a, s).unwrap();
        let cfg = TesterConfig {
            iters: 30,
            ..Default::default()
        };
        let m = multi_tester(&c, &cfg, 2, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let w = &m.basis.columns;
        assert_eq!(w.n_cols(), 2);
        let gram = w.transpose_mul(w).unwrap();
        assert!(gram.max_abs_diff(&DenseMatrix::identity(2)) <= 1e-10);
        let q = DenseMatrix::identity(4).select_columns(&[0, 1]);
        let overlap = q.transpose_mul(w).unwrap();
        let cosines =
            nalgebra::DMatrix::from_column_slice(2, 2, overlap.values()).singular_values();
        assert!(cosines.iter().all(|&c| c >= 0.99), "{cosines}");
        assert!((m.rho - 0.975).abs() < 1e-6);
    }

    #[test]
    fn overlap_analytic_cases() {
        let q = DenseMatrix::identity(8).select_columns(&[0, 1, 2, 3, 4, 5]);
        let same = subspace_overlap(&q, &q).unwrap();
        assert!((same.score - 1.0).abs() < 1e-10);
        assert!(same.per_vector.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let orth = DenseMatrix::identity(8).select_columns(&[6, 7]);
        assert!(subspace_overlap(&q, &orth).unwrap().score.abs() < 1e-10);
        let half = DenseMatrix::identity(8).select_columns(&[1, 3, 5]);
        assert!((subspace_overlap(&q, &half).unwrap().score - 0.5).abs() < 1e-10);
        let bad = DenseMatrix::from_columns(&[vec![2.0; 8]]).unwrap();
        assert!(matches!(
            subspace_overlap(&q, &bad),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn adaptive_build_on_laplace() {
        let a = gen_laplace(65, 1).unwrap();
        let cfg = AdaptiveConfig {
            target_rho: 0.99,
            ..Default::default()
        };
        let (c, log) = adaptive_build(&a, &cfg).unwrap();
        assert!(c.n_components() <= 2);
        assert_eq!(log.steps.len(), c.n_components() + 1);
        let none = AdaptiveConfig {
            max_components: 0,
            ..cfg
        };
        let (c0, log0) = adaptive_build(&a, &none).unwrap();
        assert_eq!(c0.n_components(), 0);
        assert_eq!(log0.steps.len(), 1);
        assert!(log0.final_rho > 0.0);
        let json = serde_json::to_string(&log).unwrap();
        assert!(json.contains("rho"));
    }
}
