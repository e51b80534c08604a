//! Structural invariant checks on a built composite, used by the `check`
//! driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarsening::{strength_graph_with, ModularityGraph};
use crate::composite::CompositeSolver;
use crate::error::Result;
use crate::hierarchy::Hierarchy;
use crate::vector::{dot, norm};

/// Largest operator dimension that is factored densely by [`level_checks`].
pub const DENSE_CHECK_LIMIT: usize = 500;

/// Random-pair symmetry and positivity of the composite preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdCheck {
    /// Largest `|uᵀBv − vᵀBu| / (‖u‖ ‖Bv‖ + ‖v‖ ‖Bu‖)` over the pairs.
    pub symmetry_defect: f64,
    /// Smallest `uᵀBu / ‖u‖²` over the sampled vectors.
    pub min_rayleigh: f64,
}

impl SpdCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.symmetry_defect <= tol && self.min_rayleigh > 0.0
    }
}

/// Samples `pairs` uniform random vector pairs in `[-1, 1]^n`.
pub fn composite_spd_check(c: &CompositeSolver, pairs: usize, seed: u64) -> SpdCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c.dim();
    let mut defect: f64 = 0.0;
    let mut rayleigh = f64::INFINITY;
    for _ in 0..pairs {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bu = c.apply(&u);
        let bv = c.apply(&v);
        let scale = norm(&u) * norm(&bv) + norm(&v) * norm(&bu);
        if scale > 0.0 {
            defect = defect.max((dot(&u, &bv) - dot(&v, &bu)).abs() / scale);
        }
        rayleigh = rayleigh.min(dot(&u, &bu) / dot(&u, &u));
        rayleigh = rayleigh.min(dot(&v, &bv) / dot(&v, &v));
    }
    SpdCheck {
        symmetry_defect: defect,
        min_rayleigh: rayleigh,
    }
}

/// Invariants of one coarsening step of a hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub level: usize,
    /// Vertices whose nonpositive strength row sum was clamped to 0.
    pub clamped: usize,
    /// `max_i |(B·1)_i| / T` on the aggregate graph; `None` when clamping
    /// voids the zero row-sum identity.
    pub modularity_defect: Option<f64>,
    /// `‖P R − W‖_F / ‖W‖_F` for the tentative interpolation.
    pub reconstruction_error: f64,
    /// Whether the coarse operator has a dense Cholesky factor; `None` when
    /// it is larger than [`DENSE_CHECK_LIMIT`].
    pub coarse_cholesky: Option<bool>,
}

pub fn level_checks(h: &Hierarchy) -> Result<Vec<LevelCheck>> {
    let levels = h.levels();
    let mut out = Vec::new();
    for (i, level) in levels.iter().enumerate() {
        let Some(t) = &level.transfer else { continue };
        let graph = ModularityGraph::new(strength_graph_with(
            &level.operator,
            &level.candidates,
            h.params().combine,
        )?)?;
        let modularity_defect = if graph.total() > 0.0 && graph.n_clamped() == 0 {
            let coarse = graph.coarsen(&t.aggregation)?;
            let worst = coarse
                .modularity_rowsums()
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            Some(worst / graph.total())
        } else {
            None
        };
        let w = &level.candidates;
        let r = &t.tentative.coarse_candidates;
        let mut diff = 0.0;
        for j in 0..w.n_cols() {
            let pr = t.tentative.p.spmv(r.column(j))?;
            diff += pr
                .iter()
                .zip(w.column(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let w_norm = w.frobenius_norm();
        let reconstruction_error = if w_norm > 0.0 {
            diff.sqrt() / w_norm
        } else {
            diff.sqrt()
        };
        let coarse_op = &levels[i + 1].operator;
        let coarse_cholesky = (coarse_op.n_rows() <= DENSE_CHECK_LIMIT)
            .then(|| coarse_op.to_dense().cholesky().is_ok());
        out.push(LevelCheck {
            level: i,
            clamped: graph.n_clamped(),
            modularity_defect,
            reconstruction_error,
            coarse_cholesky,
        });
    }
    Ok(out)
}
