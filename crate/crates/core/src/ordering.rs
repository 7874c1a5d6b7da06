//! Optimum-preserving orders of QUBO variables.
//!
//! An edge `(i, j)` of an [`OrderDag`] states the implication
//! `x_i = 1 ⇒ x_j = 1`. An edge is certified when its score
//!
//! ```text
//! S[i][j] = Σ_{k ≠ i,j} max(0, a[j][k] − a[i][k]) + a[j][j] − a[i][i]
//! ```
//!
//! is non-positive: moving a unit from `x_i` to `x_j` can then never raise
//! the energy, so some minimizer satisfies the implication. An acyclic set of
//! certified edges preserves the minimum of the QUBO.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{Assignment, QuboMatrix};

/// Directed acyclic graph of precedence edges over `n` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderDag {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl OrderDag {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
        }
    }

    /// Validates indices, self loops, duplicates, reverse pairs and cycles.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(i, j) in &edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self loop on {i}")));
            }
            if seen.contains(&(j, i)) {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) appears with its reverse"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
        }
        let dag = Self { n, edges };
        if !dag.is_acyclic() {
            return Err(Error::InvalidInput("order contains a cycle".into()));
        }
        Ok(dag)
    }

    pub(crate) fn from_raw(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges sorted lexicographically, for set comparisons.
    pub fn sorted_edges(&self) -> Vec<(usize, usize)> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }

    /// Kahn topological sort; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree = vec![0usize; self.n];
        let mut out = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            out[i].push(j);
            indegree[j] += 1;
        }
        let mut queue: VecDeque<usize> = (0..self.n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &out[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Same edges over a larger variable set (e.g. decision bits followed by
    /// slack bits).
    pub fn lift(&self, n: usize) -> Result<Self> {
        if n < self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: n,
            });
        }
        Ok(Self {
            n,
            edges: self.edges.clone(),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: OrderFile = serde_json::from_str(text)?;
        Self::new(file.n, file.edges)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&OrderFile {
            n: self.n,
            edges: self.edges.clone(),
        })?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct OrderFile {
    n: usize,
    edges: Vec<(usize, usize)>,
}

/// A scored candidate edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// `S[i][j]` for the implication `x_i = 1 ⇒ x_j = 1`.
pub fn score_pair(q: &QuboMatrix, i: usize, j: usize) -> Result<f64> {
    let n = q.n();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    if i == j {
        return Err(Error::InvalidParameter(format!(
            "score of pair ({i}, {i}) is undefined"
        )));
    }
    let adj = q.adjacency();
    let (ki, ai) = adj.neighbor_slices(i);
    let (kj, aj) = adj.neighbor_slices(j);
    Ok(adj.diag(j) - adj.diag(i) + positive_gain(i, j, ki, ai, kj, aj, None))
}

/// `Σ_{k ≠ i,j} max(0, a[j][k] − a[i][k])` by merging the sorted neighbor
/// lists of `i` and `j`. With `stop_above = Some(t)` the sum returns as soon
/// as it exceeds `t`.
fn positive_gain(
    i: usize,
    j: usize,
    ki: &[usize],
    ai: &[f64],
    kj: &[usize],
    aj: &[f64],
    stop_above: Option<f64>,
) -> f64 {
    let (mut p, mut r) = (0, 0);
    let mut sum = 0.0;
    while p < ki.len() || r < kj.len() {
        let (k, diff) = match (ki.get(p), kj.get(r)) {
            (Some(&a), Some(&b)) if a == b => {
                p += 1;
                r += 1;
                (a, aj[r - 1] - ai[p - 1])
            }
            (Some(&a), Some(&b)) if a < b => {
                p += 1;
                (a, -ai[p - 1])
            }
            (Some(&a), None) => {
                p += 1;
                (a, -ai[p - 1])
            }
            (_, Some(&b)) => {
                r += 1;
                (b, aj[r - 1])
            }
            (None, None) => unreachable!(),
        };
        if k == i || k == j || diff <= 0.0 {
            continue;
        }
        sum += diff;
        if let Some(t) = stop_above {
            if sum > t {
                break;
            }
        }
    }
    sum
}

/// Dense row-major view used by the `O(n³)` scan.
/// Square bit matrix, rows packed into `u64` words.
pub(crate) struct BitMatrix {
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn new(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        Self {
            words_per_row,
            bits: vec![0; n * words_per_row],
        }
    }

    #[inline]
    pub(crate) fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.words_per_row + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize) {
        self.bits[r * self.words_per_row + c / 64] |= 1 << (c % 64);
    }
}

/// Columns between prune checks in [`dense_score`].
const PRUNE_BLOCK: usize = 8;

/// `base + Σ_{k ∉ skip} max(0, row_j[k] − row_i[k])`, summed in `k` order.
/// With pruning, returns early once the partial sum is positive; the check
/// runs once per block of columns, which keeps the inner loop free of
/// data-dependent branches. Adding `+0.0` leaves the sum unchanged, so the
/// value and sign match a term-by-term loop.
#[inline]
pub(crate) fn dense_score(
    row_i: &[f64],
    row_j: &[f64],
    base: f64,
    skip: (usize, usize),
    prune: bool,
) -> f64 {
    let (lo, hi) = if skip.0 < skip.1 {
        skip
    } else {
        (skip.1, skip.0)
    };
    let mut s = base;
    for range in [0..lo, lo + 1..hi, hi + 1..row_i.len()] {
        let (ri, rj) = (&row_i[range.clone()], &row_j[range]);
        for (ci, cj) in ri.chunks(PRUNE_BLOCK).zip(rj.chunks(PRUNE_BLOCK)) {
            for (x, y) in ci.iter().zip(cj) {
                s += (y - x).max(0.0);
            }
            if prune && s > 0.0 {
                return s;
            }
        }
    }
    s
}

struct DenseView {
    n: usize,
    diag: Vec<f64>,
    a: Vec<f64>,
}

impl DenseView {
    fn new(q: &QuboMatrix) -> Self {
        let n = q.n();
        let mut a = q.symmetric().to_dense();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = a[i * n + i];
            a[i * n + i] = 0.0;
        }
        Self { n, diag, a }
    }

    #[inline]
    fn score(&self, i: usize, j: usize, prune: bool) -> f64 {
        let n = self.n;
        dense_score(
            &self.a[i * n..(i + 1) * n],
            &self.a[j * n..(j + 1) * n],
            self.diag[j] - self.diag[i],
            (i, j),
            prune,
        )
    }

    /// Row-major scan with the diagonal guard and reverse-edge exclusion.
    fn scan(&self, prune: bool) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut edges = Vec::new();
        // transposed membership: row `j` bit `i` marks edge `(i, j)`, so the
        // reverse-edge test for `(i, j)` reads row `i` sequentially
        let mut into = BitMatrix::new(n);
        for i in 0..n {
            for j in 0..n {
                if i == j || self.diag[j] > self.diag[i] || into.get(i, j) {
                    continue;
                }
                if self.score(i, j, prune) <= 0.0 {
                    into.set(j, i);
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    fn scan_parallel(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let candidate = |i: usize, j: usize| {
            i != j && self.diag[j] <= self.diag[i] && self.score(i, j, true) <= 0.0
        };
        let rows: Vec<Vec<(usize, usize)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| candidate(i, j))
                    // (j, i) is already admitted only if row j came first
                    .filter(|&j| !(j < i && candidate(j, i)))
                    .map(|j| (i, j))
                    .collect()
            })
            .collect();
        rows.into_iter().flatten().collect()
    }
}

/// Order extraction over all ordered pairs, `O(n³)` worst case.
///
/// Pairs are examined with `i` outer and `j` inner; a pair is skipped when
/// `Q[j][j] > Q[i][i]` or when `(j, i)` was admitted earlier, and the score
/// accumulation stops as soon as it turns positive.
pub fn extract_order_dense(q: &QuboMatrix) -> OrderDag {
    extract_order_dense_with_pruning(q, true)
}

/// [`extract_order_dense`] with the early break switchable; the edge set is
/// the same either way.
pub fn extract_order_dense_with_pruning(q: &QuboMatrix, prune: bool) -> OrderDag {
    let edges = DenseView::new(q).scan(prune);
    OrderDag::from_raw(q.n(), edges)
}

/// Parallel dense extraction over the outer index. Symmetric pairs are
/// resolved towards `i < j`, so the edge set equals [`extract_order_dense`]
/// (edges are returned in the same row-major order).
pub fn extract_order_parallel(q: &QuboMatrix) -> OrderDag {
    let edges = DenseView::new(q).scan_parallel();
    OrderDag::from_raw(q.n(), edges)
}

/// Order extraction restricted to adjacent pairs: `j` ranges over the
/// neighbors of `i` and `k` over the union of both neighborhoods.
/// Worst case `O(OD(Q)·d)` for maximum degree `d`.
pub fn extract_order_sparse(q: &QuboMatrix) -> OrderDag {
    let adj = q.adjacency();
    let mut admitted: HashSet<(usize, usize)> = HashSet::new();
    let mut edges = Vec::new();
    for i in 0..q.n() {
        let (ki, ai) = adj.neighbor_slices(i);
        for &j in ki {
            if admitted.contains(&(j, i)) || adj.diag(j) > adj.diag(i) {
                continue;
            }
            let base = adj.diag(j) - adj.diag(i);
            let (kj, aj) = adj.neighbor_slices(j);
            let s = base + positive_gain(i, j, ki, ai, kj, aj, Some(-base));
            if s <= 0.0 {
                admitted.insert((i, j));
                edges.push((i, j));
            }
        }
    }
    OrderDag::from_raw(q.n(), edges)
}

/// Why an order failed certification.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderViolation {
    Cycle,
    PositiveScore(PairScore),
}

impl std::fmt::Display for OrderViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderViolation::Cycle => write!(f, "order contains a cycle"),
            OrderViolation::PositiveScore(p) => {
                write!(f, "edge ({}, {}) has score {} > 0", p.i, p.j, p.score)
            }
        }
    }
}

/// First reason `g` fails the sufficient certificate, if any.
pub fn find_violation(q: &QuboMatrix, g: &OrderDag) -> Result<Option<OrderViolation>> {
    if g.n() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            found: g.n(),
        });
    }
    if !g.is_acyclic() {
        return Ok(Some(OrderViolation::Cycle));
    }
    for &(i, j) in g.edges() {
        let score = score_pair(q, i, j)?;
        if score > 0.0 {
            return Ok(Some(OrderViolation::PositiveScore(PairScore {
                i,
                j,
                score,
            })));
        }
    }
    Ok(None)
}

/// `true` iff `g` is acyclic and every edge scores `≤ 0`. This certifies
/// validity but is not necessary for it.
pub fn verify_order(q: &QuboMatrix, g: &OrderDag) -> Result<bool> {
    Ok(find_violation(q, g)?.is_none())
}

/// Whether `x` satisfies every implication of `g`.
pub fn in_ordered_subspace(g: &OrderDag, x: &Assignment) -> Result<bool> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            found: x.len(),
        });
    }
    Ok(g.edges().iter().all(|&(i, j)| !x.get(i) || x.get(j)))
}
