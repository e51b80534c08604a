//! Aggregation by modularity matching.
//!
//! Candidates `w` turn the system matrix into a strength graph with weights
//! `ā_ij = -w_i a_ij w_j`. Edges are scored by the modularity weight
//! `b_ij = ā_ij - r_i r_j / T` (row sums `r`, total `T`), locally maximal
//! positive edges are matched, matched pairs are merged, and the matching is
//! repeated on the resulting coarse graph until the requested coarsening
//! factor is reached.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::{triple_product, SparseMatrix};

/// How several candidate columns combine into one strength graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateCombine {
    #[default]
    Sum,
    Max,
    First,
}

/// Strength graph with off-diagonal entries `Σ_c -w^c_i a_ij w^c_j`; the
/// diagonal is dropped. The result is symmetric bit for bit.
pub fn strength_graph(a: &SparseMatrix, w: &DenseMatrix) -> Result<SparseMatrix> {
    strength_graph_with(a, w, CandidateCombine::Sum)
}

pub fn strength_graph_with(
    a: &SparseMatrix,
    w: &DenseMatrix,
    combine: CandidateCombine,
) -> Result<SparseMatrix> {
    if a.n_rows() != a.n_cols() || w.n_rows() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "strength graph: {}x{} matrix with {}-row candidates",
            a.n_rows(),
            a.n_cols(),
            w.n_rows()
        )));
    }
    if w.n_cols() == 0 {
        return Err(Error::InvalidParameter("no candidate columns".into()));
    }
    for (c, col) in w.columns().enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroCandidate(c));
        }
    }
    let n_use = match combine {
        CandidateCombine::First => 1,
        _ => w.n_cols(),
    };
    let mut row_offsets = Vec::with_capacity(a.n_rows() + 1);
    row_offsets.push(0);
    let mut col_indices = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &aij) in cols.iter().zip(vals) {
            if j == i {
                continue;
            }
            let mut acc: Option<f64> = None;
            for c in 0..n_use {
                let col = w.column(c);
                let v = -col[i] * aij * col[j];
                acc = Some(match (combine, acc) {
                    (_, None) => v,
                    (CandidateCombine::Max, Some(m)) => m.max(v),
                    (_, Some(s)) => s + v,
                });
            }
            col_indices.push(j);
            values.push(acc.unwrap_or(0.0));
        }
        row_offsets.push(col_indices.len());
    }
    let graph = SparseMatrix::new(a.n_rows(), a.n_cols(), row_offsets, col_indices, values)?;
    graph.symmetrized()
}

/// Weighted graph together with its (clamped) degrees and total weight.
#[derive(Debug, Clone)]
pub struct ModularityGraph {
    adjacency: SparseMatrix,
    rowsums: Vec<f64>,
    total: f64,
    n_clamped: usize,
}

impl ModularityGraph {
    /// Row sums `r_i = Σ_j ā_ij` include any stored diagonal. Vertices with
    /// `r_i ≤ 0` get `r_i = 0`, so they carry no modularity penalty and can
    /// only be matched through edges with positive raw weight.
    pub fn new(adjacency: SparseMatrix) -> Result<Self> {
        if adjacency.n_rows() != adjacency.n_cols() {
            return Err(Error::DimensionMismatch("adjacency must be square".into()));
        }
        let mut n_clamped = 0;
        let rowsums: Vec<f64> = (0..adjacency.n_rows())
            .map(|i| {
                let r: f64 = adjacency.row(i).1.iter().sum();
                if r > 0.0 {
                    r
                } else {
                    n_clamped += 1;
                    0.0
                }
            })
            .collect();
        let total = rowsums.iter().sum();
        Ok(Self {
            adjacency,
            rowsums,
            total,
            n_clamped,
        })
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn rowsums(&self) -> &[f64] {
        &self.rowsums
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of vertices whose nonpositive row sum was replaced by 0.
    pub fn n_clamped(&self) -> usize {
        self.n_clamped
    }

    pub fn n_vertices(&self) -> usize {
        self.rowsums.len()
    }

    /// `b_ij = ā_ij - r_i r_j / T` for a stored edge (0 weight if absent).
    pub fn modularity_weight(&self, i: usize, j: usize) -> f64 {
        let a = self.adjacency.get(i, j).unwrap_or(0.0);
        a - self.penalty(i, j)
    }

    /// Null-model term `r_i r_j / T`, exactly 0 when either row sum is 0 so
    /// that clamped vertices stay penalty-free even when `T = 0`.
    fn penalty(&self, i: usize, j: usize) -> f64 {
        let (ri, rj) = (self.rowsums[i], self.rowsums[j]);
        if ri == 0.0 || rj == 0.0 {
            0.0
        } else {
            ri * rj / self.total
        }
    }

    /// `B·1` for the implicit modularity matrix `B = Ā - r rᵀ / T`.
    pub fn modularity_rowsums(&self) -> Vec<f64> {
        let sum_r: f64 = self.rowsums.iter().sum();
        (0..self.n_vertices())
            .map(|i| {
                let a: f64 = self.adjacency.row(i).1.iter().sum();
                if self.rowsums[i] == 0.0 {
                    a
                } else {
                    a - self.rowsums[i] * sum_r / self.total
                }
            })
            .collect()
    }

    /// Graph of aggregates: `Āc = PᵀĀP`, `rc = Pᵀr`, same `T`.
    pub fn coarsen(&self, agg: &Aggregation) -> Result<ModularityGraph> {
        if agg.n_vertices() != self.n_vertices() {
            return Err(Error::DimensionMismatch(
                "aggregation does not match graph size".into(),
            ));
        }
        let p = piecewise_constant_p(agg);
        let adjacency = triple_product(&p, &self.adjacency)?.symmetrized()?;
        let mut rowsums = vec![0.0; agg.n_agg()];
        for (i, &a) in agg.vertex_to_agg().iter().enumerate() {
            rowsums[a] += self.rowsums[i];
        }
        Ok(ModularityGraph {
            adjacency,
            rowsums,
            total: self.total,
            n_clamped: 0,
        })
    }
}

/// `Q = (1/T) Σ_A Σ_{i,j ∈ A} b_ij`, diagonal terms included.
pub fn modularity_functional(g: &ModularityGraph, agg: &Aggregation) -> f64 {
    let map = agg.vertex_to_agg();
    let mut internal = 0.0;
    for i in 0..g.n_vertices() {
        let (cols, vals) = g.adjacency.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if map[i] == map[j] {
                internal += v;
            }
        }
    }
    let mut agg_degree = vec![0.0; agg.n_agg()];
    for (i, &a) in map.iter().enumerate() {
        agg_degree[a] += g.rowsums[i];
    }
    let penalty: f64 = agg_degree.iter().map(|d| d * d).sum::<f64>() / g.total;
    (internal - penalty) / g.total
}

/// Disjoint vertex pairs `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pseudo-random but reproducible priority of an edge, used to break weight
/// ties the way Luby's algorithm uses random draws.
#[inline]
pub fn edge_priority(key: (usize, usize)) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(key.0 as u64) ^ key.1 as u64)
}

/// Orders edges by weight, then by priority, then by the lexicographically
/// smaller `(min, max)` key. Returns true if `(wa, ka)` beats `(wb, kb)`.
#[inline]
pub fn edge_beats(wa: f64, ka: (usize, usize), wb: f64, kb: (usize, usize)) -> bool {
    if wa != wb {
        return wa > wb;
    }
    let (pa, pb) = (edge_priority(ka), edge_priority(kb));
    pa > pb || (pa == pb && ka < kb)
}

/// One round of locally-maximal matching on modularity weights.
///
/// An edge is matched iff its weight is positive and it beats every other
/// edge sharing an endpoint with it under [`edge_beats`], i.e. it is the best
/// edge at both ends.
pub fn luby_match(g: &ModularityGraph) -> Matching {
    let mut pairs = luby_round(g, &vec![true; g.n_vertices()]);
    pairs.sort_unstable();
    Matching { pairs }
}

/// One round restricted to edges between `active` vertices.
fn luby_round(g: &ModularityGraph, active: &[bool]) -> Vec<(usize, usize)> {
    let n = g.n_vertices();
    let mut best: Vec<Option<(f64, (usize, usize))>> = vec![None; n];
    for (i, slot) in best.iter_mut().enumerate() {
        if !active[i] {
            continue;
        }
        let (cols, vals) = g.adjacency.row(i);
        for (&j, &a) in cols.iter().zip(vals) {
            if j == i || !active[j] {
                continue;
            }
            let w = a - g.penalty(i, j);
            let key = (i.min(j), i.max(j));
            match slot {
                Some((bw, bk)) if !edge_beats(w, key, *bw, *bk) => {}
                _ => *slot = Some((w, key)),
            }
        }
    }
    best.iter()
        .enumerate()
        .filter_map(|(i, slot)| {
            let (w, (p, q)) = (*slot)?;
            if p != i || !(w > 0.0) {
                return None;
            }
            match best[q] {
                Some((_, k)) if k == (p, q) => Some((p, q)),
                _ => None,
            }
        })
        .collect()
}

/// Repeats [`luby_match`] rounds on the still unmatched vertices until no
/// positive edge is left between them. Returns the union of the rounds and
/// the number of rounds that matched something.
pub fn maximal_matching(g: &ModularityGraph) -> (Matching, usize) {
    let mut active = vec![true; g.n_vertices()];
    let mut pairs = Vec::new();
    let mut rounds = 0;
    loop {
        let found = luby_round(g, &active);
        if found.is_empty() {
            break;
        }
        rounds += 1;
        for &(p, q) in &found {
            active[p] = false;
            active[q] = false;
        }
        pairs.extend(found);
    }
    pairs.sort_unstable();
    (Matching { pairs }, rounds)
}

/// Vertex-to-aggregate map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    vertex_to_agg: Vec<usize>,
    n_agg: usize,
}

impl Aggregation {
    /// Checks that the map is onto `0..n_agg`.
    pub fn new(vertex_to_agg: Vec<usize>, n_agg: usize) -> Result<Self> {
        let mut seen = vec![false; n_agg];
        for (i, &a) in vertex_to_agg.iter().enumerate() {
            if a >= n_agg {
                return Err(Error::InvalidParameter(format!(
                    "vertex {i} mapped to aggregate {a} >= {n_agg}"
                )));
            }
            seen[a] = true;
        }
        if let Some(a) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!("aggregate {a} is empty")));
        }
        Ok(Self {
            vertex_to_agg,
            n_agg,
        })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            vertex_to_agg: (0..n).collect(),
            n_agg: n,
        }
    }

    /// Contiguous groups `offsets[k]..offsets[k+1]`.
    pub fn from_offsets(offsets: &[usize]) -> Result<Self> {
        let n = *offsets.last().unwrap_or(&0);
        let mut map = vec![0; n];
        for (k, w) in offsets.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::InvalidParameter("empty block in offsets".into()));
            }
            map[w[0]..w[1]].iter_mut().for_each(|a| *a = k);
        }
        Self::new(map, offsets.len().saturating_sub(1))
    }

    pub fn vertex_to_agg(&self) -> &[usize] {
        &self.vertex_to_agg
    }

    pub fn n_agg(&self) -> usize {
        self.n_agg
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_to_agg.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_agg];
        for (i, &a) in self.vertex_to_agg.iter().enumerate() {
            members[a].push(i);
        }
        members
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_agg];
        for &a in &self.vertex_to_agg {
            sizes[a] += 1;
        }
        sizes
    }

    /// `n_vertices / n_agg`.
    pub fn coarsening_factor(&self) -> f64 {
        self.n_vertices() as f64 / self.n_agg.max(1) as f64
    }

    /// Merges the aggregates paired by `m` (a matching on the aggregate graph).
    /// New aggregates are numbered by their smallest old aggregate.
    fn merge(&self, m: &Matching) -> Aggregation {
        let mut partner: Vec<usize> = (0..self.n_agg).collect();
        for &(p, q) in m.pairs() {
            partner[q] = p;
        }
        let mut new_id = vec![usize::MAX; self.n_agg];
        let mut next = 0;
        for a in 0..self.n_agg {
            if partner[a] == a {
                new_id[a] = next;
                next += 1;
            }
        }
        for a in 0..self.n_agg {
            if partner[a] != a {
                new_id[a] = new_id[partner[a]];
            }
        }
        Aggregation {
            vertex_to_agg: self.vertex_to_agg.iter().map(|&a| new_id[a]).collect(),
            n_agg: next,
        }
    }

    /// Writes one "vertex_index aggregate_index" line per vertex.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for (i, a) in self.vertex_to_agg.iter().enumerate() {
            writeln!(out, "{i} {a}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// The 0/1 interpolation with one unit entry per row.
pub fn piecewise_constant_p(agg: &Aggregation) -> SparseMatrix {
    let n = agg.n_vertices();
    SparseMatrix::from_parts_unchecked(
        n,
        agg.n_agg(),
        (0..=n).collect(),
        agg.vertex_to_agg().to_vec(),
        vec![1.0; n],
    )
}

#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub aggregation: Aggregation,
    /// Coarsening passes performed, each merging a maximal matching.
    pub rounds: usize,
    /// Set when the strength graph has no positive total weight; only edges
    /// with positive raw strength can then be merged.
    pub disconnected: bool,
    /// Vertices of the strength graph with clamped (nonpositive) row sums.
    pub n_clamped: usize,
}

/// Recursive pairwise merging until `n / n_agg ≥ gamma` or a pass matches
/// nothing. Each pass matches the current aggregate graph maximally by
/// repeated [`luby_match`] rounds, then merges the matched pairs; the last
/// pass merges only the strongest pairs needed to reach the factor.
pub fn aggregate(
    a: &SparseMatrix,
    w: &DenseMatrix,
    gamma: f64,
    initial: Option<&Aggregation>,
) -> Result<AggregateOutcome> {
    aggregate_with(a, w, gamma, initial, CandidateCombine::Sum, |_| {})
}

/// [`aggregate`] with a choice of candidate combination and a callback that
/// sees every intermediate coarse graph the matching runs on.
pub fn aggregate_with(
    a: &SparseMatrix,
    w: &DenseMatrix,
    gamma: f64,
    initial: Option<&Aggregation>,
    combine: CandidateCombine,
    mut on_graph: impl FnMut(&ModularityGraph),
) -> Result<AggregateOutcome> {
    if !(gamma >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "coarsening factor must be at least 2, got {gamma}"
        )));
    }
    let n = a.n_rows();
    let mut agg = match initial {
        Some(init) if init.n_vertices() != n => {
            return Err(Error::DimensionMismatch(
                "initial aggregation does not match matrix size".into(),
            ))
        }
        Some(init) => init.clone(),
        None => Aggregation::singletons(n),
    };
    let fine = ModularityGraph::new(strength_graph_with(a, w, combine)?)?;
    let n_clamped = fine.n_clamped();
    let disconnected = !(fine.total() > 0.0);
    if disconnected {
        log::warn!("strength graph has no positive total weight; merging only positive raw edges");
    }
    let mut graph = fine.coarsen(&agg)?;
    let mut rounds = 0;
    while agg.coarsening_factor() < gamma {
        on_graph(&graph);
        let (mut matching, _) = maximal_matching(&graph);
        rounds += 1;
        if matching.is_empty() {
            break;
        }
        // merge only the strongest pairs needed to reach the target factor
        let target = ((n as f64 / gamma).floor() as usize).max(1);
        let needed = agg.n_agg().saturating_sub(target);
        if needed == 0 {
            break;
        }
        if matching.len() > needed {
            let weight = |&(p, q): &(usize, usize)| graph.modularity_weight(p, q);
            matching.pairs.sort_by(|x, y| {
                if x == y {
                    std::cmp::Ordering::Equal
                } else if edge_beats(weight(x), *x, weight(y), *y) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }
            });
            matching.pairs.truncate(needed);
            matching.pairs.sort_unstable();
        }
        let step = Aggregation::singletons(graph.n_vertices()).merge(&matching);
        graph = graph.coarsen(&step)?;
        agg = agg.merge(&matching);
    }
    Ok(AggregateOutcome {
        aggregation: agg,
        rounds,
        disconnected,
        n_clamped,
    })
}
