//! Linearization of a QUBO matrix with respect to a valid order.
//!
//! For every edge `(i, j)` whose stored coupling `Q[min][max]` is positive,
//! the quadratic term `c·x_i·x_j` is rewritten as the linear term `c·x_i`.
//! This equals adding the penalty `c·(x_i − x_i·x_j)`, which vanishes on
//! every assignment that respects the order, so a valid order keeps the
//! minimum and the minimizers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordering::{dense_score, BitMatrix, OrderDag};
use crate::qubo::{Assignment, Coefficient, QuboMatrix};

/// One coupling moved onto the diagonal of `source`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovedTerm {
    pub source: usize,
    pub target: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearizationReport {
    pub removed: Vec<RemovedTerm>,
    /// Penalty coefficient per edge of the order, aligned with its edge list
    /// (zero when the coupling was not positive).
    pub edge_coefficients: Vec<f64>,
}

impl LinearizationReport {
    pub fn removed_count(&self) -> usize {
        self.removed.len()
    }

    /// Undoes the linearization this report describes.
    pub fn restore(&self, linearized: &QuboMatrix) -> Result<QuboMatrix> {
        let mut q = linearized.clone();
        for t in &self.removed {
            q.add(t.source, t.source, -t.coefficient)?;
            q.add(t.source, t.target, t.coefficient)?;
        }
        Ok(q)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&ReportFile {
            removed_count: self.removed_count(),
            removed: self
                .removed
                .iter()
                .map(|t| (t.source, t.target, Coefficient::from(t.coefficient)))
                .collect(),
        })?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    removed_count: usize,
    removed: Vec<(usize, usize, Coefficient)>,
}

fn check_dims(q: &QuboMatrix, g: &OrderDag) -> Result<()> {
    if g.n() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            found: g.n(),
        });
    }
    Ok(())
}

/// `Q^G`. Does not check that `g` is valid; callers certify it.
pub fn linearize(q: &QuboMatrix, g: &OrderDag) -> Result<(QuboMatrix, LinearizationReport)> {
    check_dims(q, g)?;
    let mut out = q.clone();
    let mut report = LinearizationReport::default();
    for &(i, j) in g.edges() {
        let c = q.get(i, j);
        if c > 0.0 {
            out.set(i, j, 0.0)?;
            out.add(i, i, c)?;
            report.removed.push(RemovedTerm {
                source: i,
                target: j,
                coefficient: c,
            });
            report.edge_coefficients.push(c);
        } else {
            report.edge_coefficients.push(0.0);
        }
    }
    Ok((out, report))
}

/// Order extraction and linearization in one row-major pass: each coupling
/// is moved as soon as its edge is admitted. Scores always read the input
/// matrix, so the result equals `linearize(q, extract_order_dense(q))`.
pub fn extract_and_linearize(q: &QuboMatrix) -> (QuboMatrix, OrderDag, LinearizationReport) {
    let n = q.n();
    let a = q.symmetric().to_dense();
    let mut diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut coupling = a.clone();
    let mut into = BitMatrix::new(n);
    let mut edges = Vec::new();
    let mut report = LinearizationReport::default();

    for i in 0..n {
        for j in 0..n {
            if i == j || a[j * n + j] > a[i * n + i] || into.get(i, j) {
                continue;
            }
            let s = dense_score(
                &a[i * n..(i + 1) * n],
                &a[j * n..(j + 1) * n],
                a[j * n + j] - a[i * n + i],
                (i, j),
                true,
            );
            if s > 0.0 {
                continue;
            }
            into.set(j, i);
            edges.push((i, j));
            let c = coupling[i * n + j];
            if c > 0.0 {
                diag[i] += c;
                coupling[i * n + j] = 0.0;
                coupling[j * n + i] = 0.0;
                report.removed.push(RemovedTerm {
                    source: i,
                    target: j,
                    coefficient: c,
                });
                report.edge_coefficients.push(c);
            } else {
                report.edge_coefficients.push(0.0);
            }
        }
    }

    let mut out = QuboMatrix::new(n);
    for i in 0..n {
        // entries come from a finite input and sums of its entries
        out.set(i, i, diag[i]).expect("finite diagonal");
        for j in i + 1..n {
            let c = coupling[i * n + j];
            if c != 0.0 {
                out.set(i, j, c).expect("finite coupling");
            }
        }
    }
    (out, OrderDag::from_raw(n, edges), report)
}

/// `Σ_e c(e)·(x_i − x_i·x_j)` with `c(e)` the positive coupling of edge `e`
/// (zero otherwise). Equals `energy(Q^G, x) − energy(Q, x)`.
pub fn penalty_value(q: &QuboMatrix, g: &OrderDag, x: &Assignment) -> Result<f64> {
    check_dims(q, g)?;
    if x.len() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            found: x.len(),
        });
    }
    Ok(g.edges()
        .iter()
        .filter(|&&(i, j)| x.get(i) && !x.get(j))
        .map(|&(i, j)| q.get(i, j).max(0.0))
        .sum())
}
