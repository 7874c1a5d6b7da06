//! Experiment harnesses: off-diagonal reduction on the synthetic family,
//! runtime scaling of order extraction, and optimality gaps of annealed
//! knapsack encodings with and without linearization.
//!
//! Every harness is deterministic given its seeds; grid cells may run in
//! parallel but rows always come back in grid order.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearize::linearize;
use crate::mkp::{self, MkpInstance};
use crate::ordering::extract_order_dense;
use crate::solver::{simulated_anneal, AnnealSchedule};
use crate::synth::{generate_hard, generate_synthetic, SynthParams};

/// Writes serializable rows as CSV with a header.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdRow {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub edges: usize,
    pub od_before: usize,
    pub od_after: usize,
    pub reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdMean {
    pub n: usize,
    pub p: f64,
    pub seeds: usize,
    pub mean_edges: f64,
    pub mean_od_after: f64,
    pub mean_reduction_pct: f64,
}

#[derive(Debug, Clone)]
pub struct OdReduction {
    pub rows: Vec<OdRow>,
    pub means: Vec<OdMean>,
    /// Wall-clock per row; kept out of the rows so they stay reproducible.
    pub cell_seconds: Vec<f64>,
}

/// Off-diagonal reduction of extraction plus linearization on the synthetic
/// family, per `(p, seed)` cell and averaged per `p`.
pub fn od_reduction(n: usize, s: u32, p_grid: &[f64], seeds: &[u64]) -> Result<OdReduction> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one seed is required".into(),
        ));
    }
    let cells: Vec<(f64, u64)> = p_grid
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&seed| (p, seed)))
        .collect();
    let timed = cells
        .par_iter()
        .map(|&(p, seed)| {
            let start = Instant::now();
            let q = generate_synthetic(&SynthParams { n, s, p, seed })?;
            let order = extract_order_dense(&q);
            let (lin, _) = linearize(&q, &order)?;
            let (before, after) = (q.od_count(), lin.od_count());
            let row = OdRow {
                n,
                p,
                seed,
                edges: order.len(),
                od_before: before,
                od_after: after,
                reduction_pct: 100.0 * (before - after) as f64 / before as f64,
            };
            Ok((row, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, cell_seconds): (Vec<OdRow>, Vec<f64>) = timed.into_iter().unzip();
    let means = rows
        .chunks(seeds.len())
        .map(|chunk| {
            let k = chunk.len() as f64;
            OdMean {
                n,
                p: chunk[0].p,
                seeds: chunk.len(),
                mean_edges: chunk.iter().map(|r| r.edges as f64).sum::<f64>() / k,
                mean_od_after: chunk.iter().map(|r| r.od_after as f64).sum::<f64>() / k,
                mean_reduction_pct: chunk.iter().map(|r| r.reduction_pct).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(OdReduction {
        rows,
        means,
        cell_seconds,
    })
}

/// Instance family for the timing experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceClass {
    Synthetic { p: f64 },
    Hard,
}

impl InstanceClass {
    pub fn generate(&self, n: usize, s: u32, seed: u64) -> Result<crate::qubo::QuboMatrix> {
        match *self {
            InstanceClass::Synthetic { p } => generate_synthetic(&SynthParams { n, s, p, seed }),
            InstanceClass::Hard => generate_hard(n, seed),
        }
    }
}

impl fmt::Display for InstanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceClass::Synthetic { p } => write!(f, "p={p}"),
            InstanceClass::Hard => write!(f, "hard"),
        }
    }
}

impl std::str::FromStr for InstanceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "hard" {
            return Ok(InstanceClass::Hard);
        }
        let p = s.strip_prefix("p=").unwrap_or(s);
        p.parse::<f64>()
            .ok()
            .filter(|p| p.is_finite() && *p > 0.0)
            .map(|p| InstanceClass::Synthetic { p })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown instance class {s:?}")))
    }
}

/// Source of durations for the timing harness.
pub trait Timer {
    /// Time one cell of size `n` whose work is `work`.
    fn measure(&mut self, n: usize, work: &mut dyn FnMut()) -> Duration;
}

/// Monotonic wall clock; reports the median of `repeats` runs.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    pub repeats: usize,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { repeats: 3 }
    }
}

impl Timer for WallClock {
    fn measure(&mut self, _n: usize, work: &mut dyn FnMut()) -> Duration {
        let mut runs: Vec<Duration> = (0..self.repeats.max(1))
            .map(|_| {
                let start = Instant::now();
                work();
                start.elapsed()
            })
            .collect();
        runs.sort_unstable();
        runs[runs.len() / 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    /// `b` in `t ≈ a·n^b`.
    pub exponent: f64,
    pub coefficient: f64,
}

/// Least-squares line through `(ln n, ln t)`. Needs at least four distinct
/// sizes and positive values.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit> {
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "power-law fit needs at least 4 distinct sizes, got {}",
            sizes.len()
        )));
    }
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(Error::InvalidParameter(
            "power-law fit needs positive sizes and times".into(),
        ));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let exponent = sxy / sxx;
    Ok(PowerFit {
        exponent,
        coefficient: (my - exponent * mx).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub class: String,
    pub n: usize,
    pub seed: u64,
    pub seconds: f64,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFit {
    pub class: String,
    pub exponent: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingResult {
    pub rows: Vec<TimingRow>,
    pub fits: Vec<ClassFit>,
}

impl TimingResult {
    /// Mean seconds over seeds for one class and size.
    pub fn mean_seconds(&self, class: &str, n: usize) -> Option<f64> {
        let times: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.class == class && r.n == n)
            .map(|r| r.seconds)
            .collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }
}

/// Times dense order extraction per `(class, n, seed)` cell, sequentially,
/// and fits `t ≈ a·n^b` per class to the seed-averaged times.
pub fn time_extraction(
    sizes: &[usize],
    classes: &[InstanceClass],
    seeds: &[u64],
    s: u32,
    timer: &mut dyn Timer,
) -> Result<TimingResult> {
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "timing needs at least 4 distinct sizes, got {}",
            distinct.len()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one seed is required".into(),
        ));
    }
    let mut rows = Vec::new();
    for class in classes {
        for &n in &distinct {
            for &seed in seeds {
                let q = class.generate(n, s, seed)?;
                let mut edges = 0;
                let elapsed = timer.measure(n, &mut || {
                    edges = std::hint::black_box(extract_order_dense(&q)).len();
                });
                rows.push(TimingRow {
                    class: class.to_string(),
                    n,
                    seed,
                    seconds: elapsed.as_secs_f64(),
                    edges,
                });
            }
        }
    }
    let mut result = TimingResult {
        rows,
        fits: Vec::new(),
    };
    for class in classes {
        let label = class.to_string();
        let points: Vec<(f64, f64)> = distinct
            .iter()
            .map(|&n| (n as f64, result.mean_seconds(&label, n).unwrap()))
            .collect();
        let fit = fit_power_law(&points)?;
        result.fits.push(ClassFit {
            class: label,
            exponent: fit.exponent,
            coefficient: fit.coefficient,
        });
    }
    Ok(result)
}

/// Annealing budget and penalty weight for the gap experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub lambda: f64,
    pub sweeps: usize,
    pub samples: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sweeps: 1000,
            samples: 50,
            beta_start: 1e-7,
            beta_end: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub arm: String,
    pub edges: usize,
    pub best_known: u64,
    pub samples: usize,
    pub feasible: usize,
    /// Gap of the mean feasible score; empty when nothing was feasible.
    pub avg_gap: Option<f64>,
    pub best_gap: Option<f64>,
}

/// `S_best` from the instance, or from the dynamic program when `m = 1`.
pub fn reference_score(name: &str, inst: &MkpInstance) -> Result<u64> {
    match inst.best_known() {
        Some(best) => Ok(best),
        None if inst.m() == 1 => Ok(mkp::dp_knapsack_oracle(inst)?.score),
        None => Err(Error::InvalidInput(format!(
            "instance {name} has no best-known score and m = {} > 1",
            inst.m()
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct GapResult {
    /// Baseline then linearized row for each instance, in input order.
    pub rows: Vec<GapRow>,
    /// Wall-clock per instance, both arms together.
    pub cell_seconds: Vec<f64>,
}

/// Anneals the plain and the linearized encoding of every instance with the
/// same budget and seeds, and reports feasibility and gaps per arm.
pub fn mkp_gap(instances: &[(String, MkpInstance)], config: &GapConfig) -> Result<GapResult> {
    let bests = instances
        .iter()
        .map(|(name, inst)| reference_score(name, inst))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(2 * instances.len());
    let mut cell_seconds = Vec::with_capacity(instances.len());
    for (idx, ((name, inst), &best)) in instances.iter().zip(&bests).enumerate() {
        let start = Instant::now();
        let schedule = AnnealSchedule {
            sweeps: config.sweeps,
            beta_start: config.beta_start,
            beta_end: config.beta_end,
            restarts: config.samples,
            seed: config.seed.wrapping_add(idx as u64),
        };
        let plain = mkp::encode_qubo(inst, config.lambda)?;
        let lin = mkp::encode_linearized(inst, config.lambda)?;
        let edges = lin.order_used.as_ref().map_or(0, |o| o.len());
        for (arm, enc) in [("baseline", &plain), ("linearized", &lin)] {
            let set = simulated_anneal(&enc.qubo, &schedule)?;
            let scores = set
                .samples
                .iter()
                .map(|s| mkp::decode(enc, &s.assignment, inst))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|d| d.feasible)
                .map(|d| d.objective as i64)
                .collect::<Vec<_>>();
            let (avg_gap, best_gap) = if scores.is_empty() {
                (None, None)
            } else {
                let mean = scores.iter().sum::<i64>() as f64 / scores.len() as f64;
                let top = *scores.iter().max().unwrap();
                (
                    Some((best as f64 - mean) / best as f64 * 100.0),
                    Some(mkp::optimality_gap(best as i64, top)?),
                )
            };
            rows.push(GapRow {
                instance: name.clone(),
                n: inst.n(),
                m: inst.m(),
                arm: arm.to_string(),
                edges,
                best_known: best,
                samples: set.samples.len(),
                feasible: scores.len(),
                avg_gap,
                best_gap,
            });
        }
        cell_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(GapResult { rows, cell_seconds })
}
