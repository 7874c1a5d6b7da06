//! Canonical QUBO representation and energy evaluation.
//!
//! A [`QuboMatrix`] stores the upper triangle of `Q` sparsely. The energy of
//! an assignment `x` is `Σ_{i≤j} Q[i][j]·x_i·x_j`; diagonal entries are the
//! linear terms.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse upper-triangular QUBO matrix over `n` binary variables.
///
/// Invariants: every key `(i, j)` satisfies `i <= j < n`, no stored value is
/// zero and every value is finite.
#[derive(Debug, Default)]
pub struct QuboMatrix {
    n: usize,
    terms: BTreeMap<(usize, usize), f64>,
    adjacency: OnceLock<Adjacency>,
}

impl Clone for QuboMatrix {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            terms: self.terms.clone(),
            adjacency: OnceLock::new(),
        }
    }
}

impl PartialEq for QuboMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.terms == other.terms
    }
}

impl QuboMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
            adjacency: OnceLock::new(),
        }
    }

    /// Builds a matrix from `(i, j, value)` triples. Lower-triangular entries
    /// are folded onto `(j, i)` by addition; repeating the same `(i, j)` key
    /// is an error.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut seen = std::collections::HashSet::new();
        let mut q = Self::new(n);
        for (i, j, v) in terms {
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate term ({i}, {j})")));
            }
            q.add(i, j, v)?;
        }
        Ok(q)
    }

    /// Builds a matrix from a dense square array, folding the lower triangle.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut q = Self::new(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    q.add(i, j, v)?;
                }
            }
        }
        Ok(q)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored coefficient at canonical position `(min(i,j), max(i,j))`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// Overwrites the entry at the canonical position of `(i, j)`. Setting
    /// zero removes the key.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let key = self.key(i, j)?;
        check_finite(value)?;
        self.store(key, value);
        Ok(())
    }

    /// Adds `value` to the entry at the canonical position of `(i, j)`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let key = self.key(i, j)?;
        check_finite(value)?;
        let updated = self.terms.get(&key).copied().unwrap_or(0.0) + value;
        check_finite(updated)?;
        self.store(key, updated);
        Ok(())
    }

    fn store(&mut self, key: (usize, usize), value: f64) {
        if value == 0.0 {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, value);
        }
        self.adjacency = OnceLock::new();
    }

    fn key(&self, i: usize, j: usize) -> Result<(usize, usize)> {
        for index in [i, j] {
            if index >= self.n {
                return Err(Error::IndexOutOfRange { index, n: self.n });
            }
        }
        Ok(if i <= j { (i, j) } else { (j, i) })
    }

    /// Iterates stored terms in row-major key order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.terms.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Iterates stored off-diagonal terms `(i, j, Q[i][j])` with `i < j`.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.terms().filter(|&(i, j, _)| i != j)
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    /// Number of non-zero off-diagonal entries, `OD(Q)`.
    pub fn od_count(&self) -> usize {
        self.terms.keys().filter(|(i, j)| i != j).count()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_integer_valued(&self) -> bool {
        self.terms.values().all(|v| v.fract() == 0.0)
    }

    /// View of the symmetric coefficients `a[i][j]`.
    pub fn symmetric(&self) -> SymmetricCoefficients<'_> {
        SymmetricCoefficients { q: self }
    }

    /// Symmetric neighbor lists, built on first use.
    pub fn adjacency(&self) -> &Adjacency {
        self.adjacency.get_or_init(|| Adjacency::build(self))
    }

    fn check_len(&self, x: &Assignment) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `xᵀQx`.
    pub fn energy(&self, x: &Assignment) -> Result<f64> {
        self.check_len(x)?;
        Ok(self
            .terms
            .iter()
            .filter(|(&(i, j), _)| x.get(i) && x.get(j))
            .map(|(_, &v)| v)
            .sum())
    }

    /// Energy change from flipping bit `i` of `x`, in `O(degree(i))`.
    pub fn flip_delta(&self, x: &Assignment, i: usize) -> Result<f64> {
        self.check_len(x)?;
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        let adj = self.adjacency();
        let field = adj.diag(i)
            + adj
                .neighbors(i)
                .filter(|&(j, _)| x.get(j))
                .map(|(_, a)| a)
                .sum::<f64>();
        Ok(if x.get(i) { -field } else { field })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: QuboFile = serde_json::from_str(text)?;
        Self::from_terms(
            file.n,
            file.terms.into_iter().map(|(i, j, c)| (i, j, c.value())),
        )
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = QuboFile {
            n: self.n,
            terms: self
                .terms()
                .map(|(i, j, v)| (i, j, Coefficient::from(v)))
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite coefficient {v}")))
    }
}

/// `a[i][j] = Q[i][j] + Q[j][i]` for `i != j` and `a[i][i] = Q[i][i]`.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricCoefficients<'a> {
    q: &'a QuboMatrix,
}

impl SymmetricCoefficients<'_> {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        // upper storage holds Q[i][j] + Q[j][i] already
        self.q.get(i, j)
    }

    /// Row-major dense copy of `a`, diagonal included.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.q.n;
        let mut a = vec![0.0; n * n];
        for (i, j, v) in self.q.terms() {
            a[i * n + j] = v;
        }
        // mirror the upper triangle tile by tile to keep writes cache-local
        const TILE: usize = 32;
        for bi in (0..n).step_by(TILE) {
            for bj in (bi..n).step_by(TILE) {
                for i in bi..(bi + TILE).min(n) {
                    for j in bj.max(i + 1)..(bj + TILE).min(n) {
                        a[j * n + i] = a[i * n + j];
                    }
                }
            }
        }
        a
    }
}

/// Compressed symmetric adjacency of the graph associated with a QUBO.
#[derive(Debug, Clone)]
pub struct Adjacency {
    diag: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn build(q: &QuboMatrix) -> Self {
        let n = q.n;
        let mut diag = vec![0.0; n];
        let mut degree = vec![0usize; n];
        for (i, j, v) in q.terms() {
            if i == j {
                diag[i] = v;
            } else {
                degree[i] += 1;
                degree[j] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = *offsets.last().unwrap();
        let mut targets = vec![0; total];
        let mut weights = vec![0.0; total];
        let mut cursor = offsets[..n].to_vec();
        // Row-major key order visits (j, i) for j < i before (i, k) for k > i,
        // so every list comes out sorted by neighbor index.
        for (i, j, v) in q.off_diagonal() {
            targets[cursor[i]] = j;
            weights[cursor[i]] = v;
            cursor[i] += 1;
            targets[cursor[j]] = i;
            weights[cursor[j]] = v;
            cursor[j] += 1;
        }
        Self {
            diag,
            offsets,
            targets,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Neighbors of `i` in increasing index order with their `a[i][j]`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn neighbor_slices(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.targets[range.clone()], &self.weights[range])
    }
}

/// Binary assignment `x ∈ {0,1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Bits from 0/1 integers; anything nonzero counts as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    /// Bit `i` of `mask` becomes variable `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut x = self.clone();
        x.flip(i);
        x
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// First `len` bits.
    pub fn prefix(&self, len: usize) -> Self {
        Self(self.0[..len].to_vec())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Assignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .enumerate()
            .map(|(pos, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse {
                    position: pos,
                    message: format!("expected '0' or '1', found {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

/// Integral coefficients serialize as JSON integers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Coefficient {
    Int(i64),
    Float(f64),
}

impl Coefficient {
    pub(crate) fn value(self) -> f64 {
        match self {
            Coefficient::Int(v) => v as f64,
            Coefficient::Float(v) => v,
        }
    }
}

impl From<f64> for Coefficient {
    fn from(v: f64) -> Self {
        const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
        if v.fract() == 0.0 && v.abs() < EXACT {
            Coefficient::Int(v as i64)
        } else {
            Coefficient::Float(v)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QuboFile {
    n: usize,
    terms: Vec<(usize, usize, Coefficient)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::eq6;

    #[test]
    fn energy_of_worked_example() {
        let q = eq6();
        assert_eq!(q.energy(&Assignment::from_bits(&[1, 1, 0])).unwrap(), -6.0);
        assert_eq!(q.energy(&Assignment::from_bits(&[0, 0, 1])).unwrap(), -8.0);
        assert_eq!(q.energy(&Assignment::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_wrong_length() {
        let q = eq6();
        assert!(matches!(
            q.energy(&Assignment::zeros(2)),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn empty_matrix_is_legal() {
        let q = QuboMatrix::new(0);
        assert_eq!(q.energy(&Assignment::zeros(0)).unwrap(), 0.0);
        assert_eq!(q.od_count(), 0);
    }

    #[test]
    fn od_count_counts_upper_off_diagonals() {
        assert_eq!(eq6().od_count(), 3);
        let lin = QuboMatrix::from_dense(&[
            vec![6.0, 0.0, 0.0],
            vec![0.0, -5.0, 7.0],
            vec![0.0, 0.0, -8.0],
        ])
        .unwrap();
        assert_eq!(lin.od_count(), 1);
    }

    #[test]
    fn flip_delta_examples() {
        let q = eq6();
        assert_eq!(q.flip_delta(&Assignment::zeros(3), 2).unwrap(), -8.0);
        // (1,1,0) → (0,1,0): −6 → −5
        assert_eq!(
            q.flip_delta(&Assignment::from_bits(&[1, 1, 0]), 0).unwrap(),
            1.0
        );
        assert!(matches!(
            q.flip_delta(&Assignment::zeros(3), 3),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
    }

    #[test]
    fn flip_delta_is_an_involution() {
        let q = eq6();
        for mask in 0..8 {
            let x = Assignment::from_mask(mask, 3);
            for i in 0..3 {
                let there = q.flip_delta(&x, i).unwrap();
                let back = q.flip_delta(&x.flipped(i), i).unwrap();
                assert_eq!(there + back, 0.0);
            }
        }
    }

    #[test]
    fn zero_insertion_deletes_key() {
        let mut q = eq6();
        q.set(1, 0, 0.0).unwrap();
        assert_eq!(q.od_count(), 2);
        q.add(0, 2, -7.0).unwrap();
        assert_eq!(q.od_count(), 1);
        assert!(q.terms().all(|(_, _, v)| v != 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let mut q = QuboMatrix::new(2);
        assert!(q.set(0, 1, f64::NAN).is_err());
        assert!(q.add(0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn lower_entries_fold_and_duplicates_fail() {
        let q = QuboMatrix::from_terms(2, [(0, 1, 2.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(q.get(0, 1), 5.0);
        assert!(QuboMatrix::from_terms(2, [(0, 1, 2.0), (0, 1, 3.0)]).is_err());
    }

    #[test]
    fn json_folds_and_reserializes_idempotently() {
        let text = r#"{"n": 3, "terms": [[0, 0, -3], [1, 0, 2], [0, 2, 7.0], [1, 2, 7], [1, 1, -5], [2, 2, -8]]}"#;
        let q = QuboMatrix::from_json_str(text).unwrap();
        assert_eq!(q, eq6());
        let once = q.to_json_string().unwrap();
        let twice = QuboMatrix::from_json_str(&once)
            .unwrap()
            .to_json_string()
            .unwrap();
        assert_eq!(once, twice);
        assert!(once.contains("-3"));
        assert!(!once.contains("-3.0"));
    }

    #[test]
    fn json_rejects_out_of_range_index() {
        assert!(QuboMatrix::from_json_str(r#"{"n": 2, "terms": [[0, 2, 1]]}"#).is_err());
    }

    #[test]
    fn adjacency_lists_are_sorted() {
        let q = eq6();
        let adj = q.adjacency();
        let n2: Vec<_> = adj.neighbors(2).collect();
        assert_eq!(n2, vec![(0, 7.0), (1, 7.0)]);
        assert_eq!(adj.max_degree(), 2);
    }

    #[test]
    fn assignment_string_roundtrip() {
        let x: Assignment = "0101".parse().unwrap();
        assert_eq!(x, Assignment::from_bits(&[0, 1, 0, 1]));
        assert_eq!(x.to_string(), "0101");
        assert!("01x".parse::<Assignment>().is_err());
    }
}
