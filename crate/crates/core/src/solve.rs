//! Stationary and preconditioned-CG drivers for a composite solver, with
//! convergence reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::composite::{composite_complexity, CompositeSolver};
use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::sparse::SparseMatrix;
use crate::vector::{axpy, dot, norm, xpby};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Relative residual above which the stationary iteration is abandoned.
const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Stationary,
    Pcg,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(SolveMode::Stationary),
            "pcg" => Ok(SolveMode::Pcg),
            other => Err(Error::InvalidParameter(format!(
                "unknown solve mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mode: SolveMode,
    /// `‖r_i‖ / ‖r_0‖`, starting with 1.
    pub residual_history: Vec<f64>,
    /// Per-iteration reduction normalized to one cycle.
    pub rho_per_cycle: Vec<f64>,
    /// Geometric mean of `rho_per_cycle` over the second half of the run.
    pub asymptotic_rho: f64,
    pub components: usize,
    pub complexity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Exponent that turns a composite iteration into cycles: a composite with
/// `k` components counts as `2k − 1` cycles.
fn cycle_exponent(k: usize) -> f64 {
    1.0 / (2 * k).saturating_sub(1).max(1) as f64
}

/// `(h_i / h_{i−1})^{1/(2k−1)}` for consecutive history entries.
pub fn cycle_factors(history: &[f64], k: usize) -> Vec<f64> {
    let e = cycle_exponent(k);
    history
        .windows(2)
        .map(|p| {
            if p[0] > 0.0 {
                (p[1] / p[0]).powf(e)
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-cycle factor averaged geometrically over the second half of `history`.
pub fn asymptotic_factor(history: &[f64], k: usize) -> f64 {
    let last = history.len().saturating_sub(1);
    if last == 0 {
        return 0.0;
    }
    let mid = last / 2;
    if history[mid] <= 0.0 {
        return 0.0;
    }
    (history[last] / history[mid]).powf(cycle_exponent(k) / (last - mid) as f64)
}

fn report(
    mode: SolveMode,
    c: &CompositeSolver,
    history: Vec<f64>,
    converged: bool,
    clock: Instant,
) -> ConvergenceReport {
    let k = c.n_components();
    ConvergenceReport {
        mode,
        rho_per_cycle: cycle_factors(&history, k),
        asymptotic_rho: asymptotic_factor(&history, k),
        components: k,
        complexity: composite_complexity(c),
        iterations: history.len() - 1,
        converged,
        residual_history: history,
        wall_time_s: clock.elapsed().as_secs_f64(),
    }
}

fn check_dims(c: &CompositeSolver, b: &[f64]) -> Result<()> {
    if b.len() != c.dim() {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            c.dim()
        )));
    }
    Ok(())
}

/// `x ← x + B⁻¹(b − Ax)` from `x = 0` until the relative residual is at most
/// `tol` or `max_iter` iterations.
pub fn stationary_solve(
    c: &CompositeSolver,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    check_dims(c, b)?;
    let clock = Instant::now();
    let a = c.matrix();
    let mut x = vec![0.0; b.len()];
    let r0 = norm(b);
    let mut history = vec![1.0];
    if r0 == 0.0 {
        return Ok((x, report(SolveMode::Stationary, c, history, true, clock)));
    }
    let mut r = vec![0.0; b.len()];
    let mut converged = false;
    for iter in 1..=max_iter {
        c.step(b, &mut x);
        a.residual_into(b, &x, &mut r);
        let relres = norm(&r) / r0;
        history.push(relres);
        if relres <= tol {
            converged = true;
            break;
        }
        if !(relres <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { iter, relres });
        }
    }
    Ok((
        x,
        report(SolveMode::Stationary, c, history, converged, clock),
    ))
}

/// Preconditioned conjugate gradients with `M⁻¹ = B⁻¹`.
pub fn pcg_solve(
    c: &CompositeSolver,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    check_dims(c, b)?;
    let clock = Instant::now();
    let a = c.matrix();
    let (x, history, converged) = pcg(a, |r| c.apply(r), b, tol, max_iter)?;
    Ok((x, report(SolveMode::Pcg, c, history, converged, clock)))
}

/// Plain PCG loop; returns the iterate, relative residual history and
/// whether `tol` was reached.
pub fn pcg<Op: LinearOperator + ?Sized>(
    a: &Op,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut history = vec![1.0];
    let r0 = norm(b);
    if r0 == 0.0 {
        return Ok((x, history, true));
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::PcgBreakdown(rz));
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::PcgBreakdown(pap));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let relres = norm(&r) / r0;
        history.push(relres);
        if relres <= tol {
            return Ok((x, history, true));
        }
        z = precond(&r);
        let rz_next = dot(&r, &z);
        if !(rz_next > 0.0) {
            return Err(Error::PcgBreakdown(rz_next));
        }
        xpby(&z, rz_next / rz, &mut p);
        rz = rz_next;
    }
    Ok((x, history, false))
}

/// Summary of a composite and its solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub components: usize,
    pub complexity: f64,
    /// Asymptotic per-cycle factor of the stationary run.
    pub rho_per_cycle: Option<f64>,
    pub stationary_iterations: Option<usize>,
    pub pcg_iterations: Option<usize>,
}

pub fn compute_metrics(c: &CompositeSolver, reports: &[ConvergenceReport]) -> Metrics {
    let find = |mode| reports.iter().find(|r| r.mode == mode);
    let stationary = find(SolveMode::Stationary);
    let iterations =
        |r: Option<&ConvergenceReport>| r.filter(|r| r.converged).map(|r| r.iterations);
    Metrics {
        components: c.n_components(),
        complexity: composite_complexity(c),
        rho_per_cycle: stationary.map(|r| r.asymptotic_rho),
        stationary_iterations: iterations(stationary),
        pcg_iterations: iterations(find(SolveMode::Pcg)),
    }
}

/// Relative residual `‖b − Ax‖ / ‖b‖`; absolute when `b = 0`.
pub fn relative_residual(a: &SparseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut r = vec![0.0; b.len()];
    a.residual_into(b, x, &mut r);
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::hierarchy::{build_hierarchy, HierarchyParams};
    use crate::probgen::gen_laplace;
    use crate::smoothers::{SmootherKind, SmootherState};

    fn composite(a: &SparseMatrix) -> CompositeSolver {
        CompositeSolver::new(
            a,
            SmootherState::new(a, SmootherKind::L1Jacobi, None).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_composite_takes_one_iteration() {
        let a = gen_laplace(30, 1).unwrap();
        let mut c = composite(&a);
        let w = DenseMatrix::from_columns(&[vec![1.0; 29]]).unwrap();
        c.push(build_hierarchy(&a, &w, &HierarchyParams::default()).unwrap())
            .unwrap();
        let (_, rep) = stationary_solve(&c, &vec![1.0; 29], 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(rep.complexity, 1.0);
    }

    #[test]
    fn zero_rhs() {
        let a = gen_laplace(10, 1).unwrap();
        let c = composite(&a);
        let (x, rep) = stationary_solve(&c, &[0.0; 9], 1e-12, 10).unwrap();
        assert_eq!(x, vec![0.0; 9]);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.residual_history, vec![1.0]);
    }

    #[test]
    fn laplace_one_component_converges_quickly() {
        let a = gen_laplace(65, 1).unwrap();
        let mut c = composite(&a);
        let w = DenseMatrix::from_columns(&[vec![1.0; 64]]).unwrap();
        let params = HierarchyParams {
            gamma: 2.0,
            coarse_size: 8,
            ..Default::default()
        };
        c.push(build_hierarchy(&a, &w, &params).unwrap()).unwrap();
        let b = vec![1.0; 64];
        let (x, stat) = stationary_solve(&c, &b, 1e-12, 100).unwrap();
        assert!(stat.converged, "{} iterations", stat.iterations);
        assert!(relative_residual(&a, &b, &x) <= 1e-11);
        let (_, cg) = pcg_solve(&c, &b, 1e-12, 100).unwrap();
        assert!(cg.converged);
        assert!(cg.iterations <= stat.iterations);
        assert_eq!(stat.residual_history[0], 1.0);
        assert_eq!(stat.rho_per_cycle.len(), stat.iterations);
    }

    #[test]
    fn cg_finite_termination() {
        let id = SparseMatrix::identity(4);
        let (_, h, ok) = pcg(&id, |r| r.to_vec(), &[1.0, 2.0, 3.0, 4.0], 1e-12, 10).unwrap();
        assert!(ok);
        assert_eq!(h.len(), 2);
        let d = SparseMatrix::from_diagonal(&[1.0, 2.0]);
        let (x, h, ok) = pcg(&d, |r| r.to_vec(), &[1.0, 1.0], 1e-12, 10).unwrap();
        assert!(ok && h.len() <= 3);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cg_detects_indefinite_matrix() {
        let d = SparseMatrix::from_diagonal(&[1.0, -1.0]);
        let err = pcg(&d, |r| r.to_vec(), &[1.0, 1.0], 1e-12, 10).unwrap_err();
        assert!(matches!(err, Error::PcgBreakdown(_)));
        assert!(err
            .to_string()
            .starts_with("matrix or preconditioner not s.p.d."));
    }

    #[test]
    fn cycle_factor_examples() {
        let halving: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
        assert!(cycle_factors(&halving, 1)
            .iter()
            .all(|&r| (r - 0.5).abs() < 1e-15));
        assert!((asymptotic_factor(&halving, 1) - 0.5).abs() < 1e-15);
        // three cycles per iteration for k = 2
        let eighth: Vec<f64> = (0..4).map(|i| 0.125f64.powi(i)).collect();
        assert!(cycle_factors(&eighth, 2)
            .iter()
            .all(|&r| (r - 0.5).abs() < 1e-12));
    }

    #[test]
    fn divergence_is_reported() {
        // a base smoother taken from a much smaller diagonal overshoots
        let a = SparseMatrix::from_diagonal(&[1.0, 1.0]);
        let small = SparseMatrix::from_diagonal(&[0.1, 0.1]);
        let c = CompositeSolver::new(
            &a,
            SmootherState::new(&small, SmootherKind::L1Jacobi, None).unwrap(),
        )
        .unwrap();
        let err = stationary_solve(&c, &[1.0, 1.0], 1e-12, 50).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn metrics_from_reports() {
        let a = gen_laplace(30, 1).unwrap();
        let mut c = composite(&a);
        let w = DenseMatrix::from_columns(&[vec![1.0; 29]]).unwrap();
        c.push(build_hierarchy(&a, &w, &HierarchyParams::default()).unwrap())
            .unwrap();
        let b = vec![1.0; 29];
        let (_, s) = stationary_solve(&c, &b, 1e-12, 10).unwrap();
        let (_, p) = pcg_solve(&c, &b, 1e-12, 10).unwrap();
        let m = compute_metrics(&c, &[s, p]);
        assert_eq!(m.components, 1);
        assert_eq!(m.complexity, 1.0);
        assert_eq!(m.stationary_iterations, Some(1));
        assert_eq!(m.pcg_iterations, Some(1));
    }
}
