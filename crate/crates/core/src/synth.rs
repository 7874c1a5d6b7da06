//! Synthetic QUBO families used for reduction-rate and runtime experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::QuboMatrix;

/// Seeded, portable generator shared by every instance family.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters of the dense ordered family.
///
/// Off-diagonals are drawn from `U(1+o, s+o)` and diagonals from
/// `U(−⌊p(n−1)(s+1)⌋ − o, −1 − o)` with offset `o = round(s·p)`. Larger `p`
/// spreads the diagonal and makes more pairs orderable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub s: u32,
    pub p: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn offset(&self) -> i64 {
        (f64::from(self.s) * self.p).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.s < 1 {
            return Err(Error::InvalidParameter("s must be at least 1".into()));
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

pub fn generate_synthetic(params: &SynthParams) -> Result<QuboMatrix> {
    params.validate()?;
    let SynthParams { n, s, p, seed } = *params;
    let s = i64::from(s);
    let o = params.offset();
    let spread = (p * (n as f64 - 1.0) * (s as f64 + 1.0)).floor() as i64;
    let mut rng = seeded_rng(seed);
    let mut q = QuboMatrix::new(n);
    for i in 0..n {
        let d = rng.gen_range(-spread - o..=-1 - o);
        q.set(i, i, d as f64)?;
        for j in i + 1..n {
            let c = rng.gen_range(1 + o..=s + o);
            q.set(i, j, c as f64)?;
        }
    }
    Ok(q)
}

/// Every upper-triangular entry i.i.d. uniform on `{−1, 0, 1}`.
pub fn generate_hard(n: usize, seed: u64) -> Result<QuboMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "n must be at least 2, got {n}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut q = QuboMatrix::new(n);
    for i in 0..n {
        for j in i..n {
            let v: i32 = rng.gen_range(-1..=1);
            q.set(i, j, f64::from(v))?;
        }
    }
    Ok(q)
}
