//! Multi-dimensional knapsack instances and their QUBO encodings.
//!
//! Each constraint `Σ_i w[k][i]·x_i ≤ C_k` becomes the penalty
//! `λ·(Σ_i w[k][i]·x_i − Σ_b s_b·y_b)²` over binary slack bits `y` whose
//! weights `1, 2, …, 2^{κ−2}, R` reach every integer in `0..=C_k`. The
//! objective is `−Σ_i v_i·x_i` plus all penalties.
//!
//! Variable layout: decision bits `0..n` in item order, then one slack
//! block per constraint in constraint order.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordering::OrderDag;
use crate::qubo::{Assignment, QuboMatrix};
use crate::synth::seeded_rng;

/// Largest item count accepted by [`mkp_exact_oracle`].
pub const EXACT_ORACLE_LIMIT: usize = 24;
/// Largest `n·(C+1)` table accepted by [`dp_knapsack_oracle`].
pub const DP_CELL_LIMIT: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkpInstance {
    values: Vec<u64>,
    /// `m` rows of `n` weights.
    weights: Vec<Vec<u64>>,
    capacities: Vec<u64>,
    best_known: Option<u64>,
}

impl MkpInstance {
    pub fn new(
        values: Vec<u64>,
        weights: Vec<Vec<u64>>,
        capacities: Vec<u64>,
        best_known: Option<u64>,
    ) -> Result<Self> {
        let n = values.len();
        if n == 0 || weights.is_empty() {
            return Err(Error::InvalidInput(
                "instance needs at least one item and one constraint".into(),
            ));
        }
        if weights.len() != capacities.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: capacities.len(),
            });
        }
        if let Some(row) = weights.iter().find(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if values
            .iter()
            .chain(weights.iter().flatten())
            .chain(&capacities)
            .any(|&v| v == 0)
        {
            return Err(Error::InvalidInput(
                "values, weights and capacities must be at least 1".into(),
            ));
        }
        Ok(Self {
            values,
            weights,
            capacities,
            best_known,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.capacities.len()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn weights(&self) -> &[Vec<u64>] {
        &self.weights
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn best_known(&self) -> Option<u64> {
        self.best_known
    }

    pub fn with_best_known(mut self, best: Option<u64>) -> Self {
        self.best_known = best;
        self
    }

    /// Single-constraint knapsack keeping only the first constraint.
    pub fn first_constraint_only(&self) -> Self {
        Self {
            values: self.values.clone(),
            weights: vec![self.weights[0].clone()],
            capacities: vec![self.capacities[0]],
            best_known: None,
        }
    }

    pub fn objective(&self, selection: &Assignment) -> u64 {
        (0..self.n())
            .filter(|&i| selection.get(i))
            .map(|i| self.values[i])
            .sum()
    }

    /// `Σ_i w[k][i]·x_i − C_k` per constraint.
    pub fn excess(&self, selection: &Assignment) -> Vec<i64> {
        self.weights
            .iter()
            .zip(&self.capacities)
            .map(|(row, &cap)| {
                let load: u64 = (0..self.n())
                    .filter(|&i| selection.get(i))
                    .map(|i| row[i])
                    .sum();
                load as i64 - cap as i64
            })
            .collect()
    }

    pub fn is_feasible(&self, selection: &Assignment) -> bool {
        self.excess(selection).iter().all(|&e| e <= 0)
    }
}

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
    position: usize,
}

impl Tokens<'_> {
    fn next_int(&mut self, what: &str) -> Result<i64> {
        let position = self.position;
        let token = self.iter.next().ok_or_else(|| Error::Parse {
            position,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        self.position += 1;
        token.parse::<i64>().map_err(|_| Error::Parse {
            position,
            message: format!("expected integer {what}, found {token:?}"),
        })
    }

    fn next_positive(&mut self, what: &str) -> Result<u64> {
        let position = self.position;
        let v = self.next_int(what)?;
        if v < 1 {
            return Err(Error::Parse {
                position,
                message: format!("{what} must be positive, found {v}"),
            });
        }
        Ok(v as u64)
    }
}

/// Reads the OR-Library `mknapcb` layout: problem count, then per problem
/// `n m best_known`, `n` values, `m` rows of `n` weights and `m` capacities.
/// A best-known value of 0 means unknown.
pub fn parse_orlib(text: &str) -> Result<Vec<MkpInstance>> {
    let mut tokens = Tokens {
        iter: text.split_whitespace(),
        position: 0,
    };
    let count = tokens.next_int("problem count")?;
    if count < 0 {
        return Err(Error::Parse {
            position: 0,
            message: "negative problem count".into(),
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n = tokens.next_positive("item count n")? as usize;
        let m = tokens.next_positive("constraint count m")? as usize;
        let best_pos = tokens.position;
        let best = tokens.next_int("best known value")?;
        if best < 0 {
            return Err(Error::Parse {
                position: best_pos,
                message: format!("best known value must be non-negative, found {best}"),
            });
        }
        let values = (0..n)
            .map(|_| tokens.next_positive("value"))
            .collect::<Result<Vec<_>>>()?;
        let weights = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| tokens.next_positive("weight"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let capacities = (0..m)
            .map(|_| tokens.next_positive("capacity"))
            .collect::<Result<Vec<_>>>()?;
        let best_known = (best > 0).then_some(best as u64);
        out.push(MkpInstance::new(values, weights, capacities, best_known)?);
    }
    Ok(out)
}

/// Writes instances in the layout read by [`parse_orlib`].
pub fn write_orlib(instances: &[MkpInstance]) -> String {
    fn row(out: &mut String, xs: &[u64]) {
        for chunk in xs.chunks(20) {
            let line: Vec<String> = chunk.iter().map(u64::to_string).collect();
            out.push(' ');
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    let mut out = format!(" {}\n", instances.len());
    for inst in instances {
        let _ = writeln!(
            out,
            " {} {} {}",
            inst.n(),
            inst.m(),
            inst.best_known.unwrap_or(0)
        );
        row(&mut out, &inst.values);
        for w in &inst.weights {
            row(&mut out, w);
        }
        row(&mut out, &inst.capacities);
    }
    out
}

pub fn read_orlib(path: impl AsRef<Path>) -> Result<Vec<MkpInstance>> {
    parse_orlib(&std::fs::read_to_string(path)?)
}

/// Random instance in the style of the OR-Library generator.
///
/// `w[k][i] ~ U(1, 1000)`, `C_k = ⌊α·Σ_i w[k][i]⌋` (at least 1) and
/// `v_i = ⌊Σ_k w[k][i] / m + 500·q_i⌋` with one `q_i ~ U[0, 1)` per item.
pub fn generate_mkp(n: usize, m: usize, alpha: f64, seed: u64) -> Result<MkpInstance> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidParameter(format!(
            "n and m must be at least 1, got {n} and {m}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let weights: Vec<Vec<u64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(1..=1000u64)).collect())
        .collect();
    let capacities = weights
        .iter()
        .map(|row| ((alpha * row.iter().sum::<u64>() as f64).floor() as u64).max(1))
        .collect();
    let values = (0..n)
        .map(|i| {
            let q: f64 = rng.gen();
            let mean_weight = weights.iter().map(|row| row[i]).sum::<u64>() as f64 / m as f64;
            ((mean_weight + 500.0 * q).floor() as u64).max(1)
        })
        .collect();
    MkpInstance::new(values, weights, capacities, None)
}

/// Binary slack weights for capacity `C`: `κ = ⌊log₂ C⌋ + 1` bits weighted
/// `1, 2, …, 2^{κ−2}` plus the residual `R = C + 1 − 2^{κ−1}`.
pub fn slack_weights(capacity: u64) -> Result<Vec<u64>> {
    if capacity < 1 {
        return Err(Error::InvalidParameter(
            "capacity must be at least 1".into(),
        ));
    }
    let bits = (u64::BITS - capacity.leading_zeros()) as usize;
    let mut weights: Vec<u64> = (0..bits - 1).map(|b| 1u64 << b).collect();
    weights.push(capacity + 1 - (1u64 << (bits - 1)));
    Ok(weights)
}

/// Slack bits of one constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackBlock {
    pub constraint: usize,
    pub offset: usize,
    pub weights: Vec<u64>,
}

impl SlackBlock {
    pub fn bits(&self) -> usize {
        self.weights.len()
    }

    pub fn residual(&self) -> u64 {
        *self.weights.last().expect("slack block is never empty")
    }

    pub fn capacity(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Bits of this block that encode the slack amount `t`, if `t ≤ C`:
    /// plain binary below `2^{κ−1}`, otherwise the residual plus binary.
    pub fn encode(&self, t: u64) -> Option<Vec<bool>> {
        if t > self.capacity() {
            return None;
        }
        let low = self.bits() - 1;
        let (rest, use_residual) = if t < 1u64 << low {
            (t, false)
        } else {
            (t - self.residual(), true)
        };
        let mut bits: Vec<bool> = (0..low).map(|b| rest >> b & 1 == 1).collect();
        bits.push(use_residual);
        Some(bits)
    }

    /// Slack amount encoded by `x`.
    pub fn value(&self, x: &Assignment) -> u64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(b, _)| x.get(self.offset + b))
            .map(|(_, &w)| w)
            .sum()
    }
}

pub fn slack_layout(capacity: u64) -> Result<SlackBlock> {
    Ok(SlackBlock {
        constraint: 0,
        offset: 0,
        weights: slack_weights(capacity)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackLayout {
    pub n_decision: usize,
    pub slack_blocks: Vec<SlackBlock>,
}

impl SlackLayout {
    pub fn for_instance(inst: &MkpInstance) -> Result<Self> {
        let mut offset = inst.n();
        let mut slack_blocks = Vec::with_capacity(inst.m());
        for (k, &cap) in inst.capacities.iter().enumerate() {
            let weights = slack_weights(cap)?;
            let len = weights.len();
            slack_blocks.push(SlackBlock {
                constraint: k,
                offset,
                weights,
            });
            offset += len;
        }
        Ok(Self {
            n_decision: inst.n(),
            slack_blocks,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_decision
            + self
                .slack_blocks
                .iter()
                .map(SlackBlock::bits)
                .sum::<usize>()
    }
}

/// A knapsack QUBO plus what is needed to decode its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboEncoding {
    pub qubo: QuboMatrix,
    pub layout: SlackLayout,
    pub lambda: f64,
    pub linearized: bool,
    /// Dominance order over decision bits, when linearized.
    pub order_used: Option<OrderDag>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    n_decision: usize,
    slack_blocks: Vec<SlackBlock>,
    lambda: f64,
}

impl QuboEncoding {
    pub fn layout_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LayoutFile {
            n_decision: self.layout.n_decision,
            slack_blocks: self.layout.slack_blocks.clone(),
            lambda: self.lambda,
        })?)
    }

    /// Parses a layout file into `(layout, lambda)`.
    pub fn parse_layout(text: &str) -> Result<(SlackLayout, f64)> {
        let file: LayoutFile = serde_json::from_str(text)?;
        Ok((
            SlackLayout {
                n_decision: file.n_decision,
                slack_blocks: file.slack_blocks,
            },
            file.lambda,
        ))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}

/// `−Σ v_i x_i + λ Σ_k (Σ_i w[k][i] x_i − Σ_b s_b y_b)²` expanded into
/// upper-triangular form.
pub fn encode_qubo(inst: &MkpInstance, lambda: f64) -> Result<QuboEncoding> {
    check_lambda(lambda)?;
    let layout = SlackLayout::for_instance(inst)?;
    let total = layout.n_total();
    let mut dense = vec![0.0; total * total];
    for (i, &v) in inst.values.iter().enumerate() {
        dense[i * total + i] -= v as f64;
    }
    for block in &layout.slack_blocks {
        // signed coefficients of the linear form inside the square
        let mut linear: Vec<(usize, f64)> = inst.weights[block.constraint]
            .iter()
            .enumerate()
            .map(|(i, &w)| (i, w as f64))
            .collect();
        linear.extend(
            block
                .weights
                .iter()
                .enumerate()
                .map(|(b, &s)| (block.offset + b, -(s as f64))),
        );
        for (t, &(p, cp)) in linear.iter().enumerate() {
            dense[p * total + p] += lambda * cp * cp;
            for &(r, cr) in &linear[t + 1..] {
                let (lo, hi) = if p < r { (p, r) } else { (r, p) };
                dense[lo * total + hi] += 2.0 * lambda * cp * cr;
            }
        }
    }
    let mut qubo = QuboMatrix::new(total);
    for i in 0..total {
        for j in i..total {
            let v = dense[i * total + j];
            if v != 0.0 {
                qubo.set(i, j, v)?;
            }
        }
    }
    Ok(QuboEncoding {
        qubo,
        layout,
        lambda,
        linearized: false,
        order_used: None,
    })
}

/// Dominance order: `(i, j)` when `v_i ≤ v_j` and `w[k][i] ≥ w[k][j]` for
/// every `k`; identical items are ordered only from lower to higher index.
pub fn extract_mkp_order(inst: &MkpInstance) -> OrderDag {
    let n = inst.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || inst.values[i] > inst.values[j] {
                continue;
            }
            if inst.weights.iter().any(|row| row[i] < row[j]) {
                continue;
            }
            let identical =
                inst.values[i] == inst.values[j] && inst.weights.iter().all(|row| row[i] == row[j]);
            if identical && i > j {
                continue;
            }
            edges.push((i, j));
        }
    }
    OrderDag::from_raw(n, edges)
}

/// [`encode_qubo`] with every dominance edge `(i, j)` linearized: the cross
/// coefficient `2λ Σ_k w[k][i]·w[k][j]` moves onto the diagonal of `x_i`.
/// Slack terms are untouched.
pub fn encode_linearized(inst: &MkpInstance, lambda: f64) -> Result<QuboEncoding> {
    let mut enc = encode_qubo(inst, lambda)?;
    let order = extract_mkp_order(inst);
    for &(i, j) in order.edges() {
        let c = 2.0
            * lambda
            * inst
                .weights
                .iter()
                .map(|row| (row[i] * row[j]) as f64)
                .sum::<f64>();
        enc.qubo.add(i, j, -c)?;
        enc.qubo.add(i, i, c)?;
    }
    enc.linearized = true;
    enc.order_used = Some(order);
    Ok(enc)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedSolution {
    pub selection: Assignment,
    pub objective: u64,
    pub feasible: bool,
    /// `Σ_i w[k][i]·x_i − C_k` per constraint; feasible iff none is positive.
    pub excess: Vec<i64>,
}

/// Projects a sample onto the decision bits. Feasibility ignores the slack
/// bits: a selection can be feasible even when its penalty is positive.
pub fn decode(enc: &QuboEncoding, x: &Assignment, inst: &MkpInstance) -> Result<DecodedSolution> {
    if x.len() != enc.layout.n_total() {
        return Err(Error::DimensionMismatch {
            expected: enc.layout.n_total(),
            found: x.len(),
        });
    }
    if enc.layout.n_decision != inst.n() {
        return Err(Error::DimensionMismatch {
            expected: enc.layout.n_decision,
            found: inst.n(),
        });
    }
    let selection = x.prefix(inst.n());
    let excess = inst.excess(&selection);
    Ok(DecodedSolution {
        objective: inst.objective(&selection),
        feasible: excess.iter().all(|&e| e <= 0),
        excess,
        selection,
    })
}

/// `(best − achieved) / best × 100`.
pub fn optimality_gap(best_known: i64, achieved: i64) -> Result<f64> {
    if best_known <= 0 {
        return Err(Error::InvalidParameter(format!(
            "best known score must be positive, got {best_known}"
        )));
    }
    Ok((best_known - achieved) as f64 / best_known as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactSolution {
    pub score: u64,
    pub selection: Assignment,
}

/// Exact single-constraint optimum by capacity-indexed dynamic programming.
/// Needs `m = 1` and `n·(C+1) ≤ DP_CELL_LIMIT`.
pub fn dp_knapsack_oracle(inst: &MkpInstance) -> Result<ExactSolution> {
    if inst.m() != 1 {
        return Err(Error::InvalidParameter(format!(
            "dynamic program needs m = 1, got {}",
            inst.m()
        )));
    }
    let n = inst.n();
    let cap = inst.capacities[0] as usize;
    let cells = n.saturating_mul(cap + 1);
    if cells > DP_CELL_LIMIT {
        return Err(Error::TooLarge {
            what: "dynamic program table",
            actual: cells,
            limit: DP_CELL_LIMIT,
        });
    }
    let w = &inst.weights[0];
    let mut best = vec![0u64; cap + 1];
    let mut take = vec![false; cells];
    for i in 0..n {
        let wi = w[i] as usize;
        if wi > cap {
            continue;
        }
        for c in (wi..=cap).rev() {
            let with = best[c - wi] + inst.values[i];
            if with > best[c] {
                best[c] = with;
                take[i * (cap + 1) + c] = true;
            }
        }
    }
    let mut selection = Assignment::zeros(n);
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * (cap + 1) + c] {
            selection.set(i, true);
            c -= w[i] as usize;
        }
    }
    Ok(ExactSolution {
        score: best[cap],
        selection,
    })
}

/// Exact optimum by enumerating all `2^n` selections; `n ≤ 24`.
pub fn mkp_exact_oracle(inst: &MkpInstance) -> Result<ExactSolution> {
    let n = inst.n();
    if n > EXACT_ORACLE_LIMIT {
        return Err(Error::TooLarge {
            what: "item count",
            actual: n,
            limit: EXACT_ORACLE_LIMIT,
        });
    }
    let mut load = vec![0i64; inst.m()];
    let mut value = 0u64;
    let mut mask = 0u64;
    let (mut best, mut best_mask) = (0u64, 0u64);
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let adding = mask >> i & 1 == 0;
        mask ^= 1 << i;
        for (k, row) in inst.weights.iter().enumerate() {
            load[k] += if adding {
                row[i] as i64
            } else {
                -(row[i] as i64)
            };
        }
        value = if adding {
            value + inst.values[i]
        } else {
            value - inst.values[i]
        };
        let feasible = load
            .iter()
            .zip(&inst.capacities)
            .all(|(&l, &c)| l <= c as i64);
        if feasible && value > best {
            best = value;
            best_mask = mask;
        }
    }
    Ok(ExactSolution {
        score: best,
        selection: Assignment::from_mask(best_mask, n),
    })
}
