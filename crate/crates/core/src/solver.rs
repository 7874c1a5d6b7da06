//! QUBO minimizers: exhaustive Gray-code search, single-flip simulated
//! annealing and a local-minimum census.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{Adjacency, Assignment, QuboMatrix};

pub const BRUTE_FORCE_LIMIT: usize = 26;
pub const LOCAL_MINIMA_LIMIT: usize = 22;

/// Local fields `h_i = Q[i][i] + Σ_j a[i][j]·x_j`; flipping bit `i` changes
/// the energy by `h_i` if it is 0 and by `−h_i` if it is 1.
struct FieldState<'a> {
    adj: &'a Adjacency,
    bits: Vec<bool>,
    field: Vec<f64>,
}

impl<'a> FieldState<'a> {
    fn new(adj: &'a Adjacency, bits: Vec<bool>) -> Self {
        let n = adj.n();
        let field = (0..n)
            .map(|i| {
                adj.diag(i)
                    + adj
                        .neighbors(i)
                        .filter(|&(j, _)| bits[j])
                        .map(|(_, a)| a)
                        .sum::<f64>()
            })
            .collect();
        Self { adj, bits, field }
    }

    #[inline]
    fn delta(&self, i: usize) -> f64 {
        if self.bits[i] {
            -self.field[i]
        } else {
            self.field[i]
        }
    }

    #[inline]
    fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
        let sign = if self.bits[i] { 1.0 } else { -1.0 };
        let (targets, weights) = self.adj.neighbor_slices(i);
        for (&j, &a) in targets.iter().zip(weights) {
            self.field[j] += sign * a;
        }
    }

    fn is_local_minimum(&self) -> bool {
        (0..self.bits.len()).all(|i| self.delta(i) >= 0.0)
    }
}

fn check_limit(q: &QuboMatrix, limit: usize) -> Result<()> {
    if q.n() > limit {
        return Err(Error::TooLarge {
            what: "variable count",
            actual: q.n(),
            limit,
        });
    }
    Ok(())
}

/// Walks all `2^n` assignments in reflected Gray-code order, calling
/// `visit(state, energy, mask)` on each, starting from all zeros.
fn gray_walk(q: &QuboMatrix, mut visit: impl FnMut(&FieldState<'_>, f64, u64)) {
    let n = q.n();
    let mut state = FieldState::new(q.adjacency(), vec![false; n]);
    let mut energy = 0.0;
    let mut mask = 0u64;
    visit(&state, energy, mask);
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        energy += state.delta(i);
        state.flip(i);
        mask ^= 1 << i;
        visit(&state, energy, mask);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub min_energy: f64,
    /// First minimizer met along the Gray-code walk.
    pub argmin: Assignment,
    pub argmin_count: u64,
}

/// Exact minimum by exhaustive enumeration; `n ≤ 26`.
///
/// Energies are updated incrementally, which is exact for integer-valued
/// matrices within `2^53`.
pub fn brute_force(q: &QuboMatrix) -> Result<BruteForceResult> {
    check_limit(q, BRUTE_FORCE_LIMIT)?;
    let mut best = f64::INFINITY;
    let mut best_mask = 0u64;
    let mut count = 0u64;
    gray_walk(q, |_, e, mask| {
        if e < best {
            best = e;
            best_mask = mask;
            count = 1;
        } else if e == best {
            count += 1;
        }
    });
    Ok(BruteForceResult {
        min_energy: best,
        argmin: Assignment::from_mask(best_mask, q.n()),
        argmin_count: count,
    })
}

/// Number of assignments no single bit flip improves (plateaus included);
/// `n ≤ 22`.
pub fn count_local_minima(q: &QuboMatrix) -> Result<u64> {
    check_limit(q, LOCAL_MINIMA_LIMIT)?;
    let mut count = 0;
    gray_walk(q, |state, _, _| {
        if state.is_local_minimum() {
            count += 1;
        }
    });
    Ok(count)
}

/// Geometric inverse-temperature schedule for [`simulated_anneal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl AnnealSchedule {
    /// Default temperatures scaled by the largest coefficient magnitude:
    /// `β` runs from `0.01/scale` to `10/scale`.
    pub fn scaled_to(q: &QuboMatrix, sweeps: usize, restarts: usize, seed: u64) -> Self {
        let scale = q.max_abs_coefficient();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self {
            sweeps,
            beta_start: 0.01 / scale,
            beta_end: 10.0 / scale,
            restarts,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps < 1 || self.restarts < 1 {
            return Err(Error::InvalidParameter(
                "sweeps and restarts must be at least 1".into(),
            ));
        }
        if !(self.beta_start > 0.0 && self.beta_end >= self.beta_start && self.beta_end.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_start <= beta_end < inf, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    /// `β` used during sweep `t`.
    pub fn beta(&self, t: usize) -> f64 {
        if self.sweeps == 1 {
            return self.beta_end;
        }
        let frac = t as f64 / (self.sweeps - 1) as f64;
        self.beta_start * (self.beta_end / self.beta_start).powf(frac)
    }

    /// Independent stream for one restart, derived from `(seed, restart)`.
    fn restart_rng(&self, restart: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(restart as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub assignment: Assignment,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub best: usize,
}

impl SampleSet {
    /// Builds a set from assignments, recomputing every energy from scratch.
    pub fn from_assignments(q: &QuboMatrix, assignments: Vec<Assignment>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::InvalidInput(
                "sample set needs at least one sample".into(),
            ));
        }
        let samples = assignments
            .into_iter()
            .map(|assignment| {
                let energy = q.energy(&assignment)?;
                Ok(Sample { assignment, energy })
            })
            .collect::<Result<Vec<_>>>()?;
        let best = samples
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.energy.total_cmp(&b.1.energy))
            .map(|(i, _)| i)
            .unwrap();
        Ok(Self { samples, best })
    }

    pub fn best_sample(&self) -> &Sample {
        &self.samples[self.best]
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = SampleFile {
            samples: self
                .samples
                .iter()
                .map(|s| SampleEntry {
                    bits: s.assignment.to_string(),
                    energy: s.energy,
                })
                .collect(),
            best: self.best,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SampleFile = serde_json::from_str(text)?;
        if file.best >= file.samples.len() {
            return Err(Error::InvalidInput(format!(
                "best index {} out of range for {} samples",
                file.best,
                file.samples.len()
            )));
        }
        let samples = file
            .samples
            .into_iter()
            .map(|s| {
                Ok(Sample {
                    assignment: s.bits.parse()?,
                    energy: s.energy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            best: file.best,
        })
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
struct SampleEntry {
    bits: String,
    energy: f64,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    samples: Vec<SampleEntry>,
    best: usize,
}

/// Single-spin-flip Metropolis annealing, one sample per restart.
///
/// Each restart starts from a uniformly random assignment; every sweep
/// visits all bits in a fresh random order and accepts a flip with
/// probability `min(1, exp(−β·Δ))`. Restarts run in parallel on independent
/// streams, so the result depends only on the schedule.
pub fn simulated_anneal(q: &QuboMatrix, schedule: &AnnealSchedule) -> Result<SampleSet> {
    schedule.validate()?;
    let adj = q.adjacency();
    let n = q.n();
    let finals: Vec<Assignment> = (0..schedule.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = schedule.restart_rng(restart);
            let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let mut state = FieldState::new(adj, bits);
            let mut visit: Vec<usize> = (0..n).collect();
            for t in 0..schedule.sweeps {
                let beta = schedule.beta(t);
                visit.shuffle(&mut rng);
                for &i in &visit {
                    let delta = state.delta(i);
                    if delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp() {
                        state.flip(i);
                    }
                }
            }
            Assignment::from_bools(state.bits)
        })
        .collect();
    SampleSet::from_assignments(q, finals)
}

/// Whether no single bit flip lowers the energy of `x`.
pub fn is_local_minimum(q: &QuboMatrix, x: &Assignment) -> Result<bool> {
    if x.len() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            found: x.len(),
        });
    }
    Ok(FieldState::new(q.adjacency(), x.bits().to_vec()).is_local_minimum())
}
