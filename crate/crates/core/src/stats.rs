//! Exact tail probabilities and the statistical checks used by the
//! experiment harness.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("q = {0} outside (0,1)")]
    QRange(f64),
    #[error("m must be positive")]
    MZero,
}

fn ln_choose(m: u64, k: u64) -> f64 {
    ln_gamma(m as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((m - k) as f64 + 1.0)
}

/// Exact `P(Bin(m, q) <= k)` via stable log-space summation of the pmf.
pub fn binomial_cdf(m: u64, q: f64, k: u64) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return if k >= m { 1.0 } else { 0.0 };
    }
    let k = k.min(m);
    let lnq = q.ln();
    let ln1q = (1.0 - q).ln();
    let mut terms = Vec::with_capacity((k + 1) as usize);
    let mut max = f64::NEG_INFINITY;
    for j in 0..=k {
        let t = ln_choose(m, j) + j as f64 * lnq + (m - j) as f64 * ln1q;
        if t > max {
            max = t;
        }
        terms.push(t);
    }
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailCheck {
    pub m: u64,
    pub q: f64,
    pub mq: f64,
    /// Cutoff `floor(mq / 9)`.
    pub cutoff: u64,
    /// Exact `P(Bin(m, q) <= cutoff)`.
    pub exact: f64,
    /// `exp(-0.533 m q)`.
    pub bound: f64,
    pub holds: bool,
}

/// Exact check of the lower-tail estimate
/// `P(Bin(m,q) <= mq/9) < exp(-0.533 mq)`. The estimate is stated for all
/// sufficiently large `mq`, with no explicit threshold; callers sweep `m`
/// to locate where it starts to hold.
pub fn binomial_tail_check(m: u64, q: f64) -> Result<TailCheck, StatsError> {
    if m == 0 {
        return Err(StatsError::MZero);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::QRange(q));
    }
    let mq = m as f64 * q;
    let cutoff = (mq / 9.0).floor() as u64;
    let exact = binomial_cdf(m, q, cutoff);
    let bound = (-0.533 * mq).exp();
    Ok(TailCheck {
        m,
        q,
        mq,
        cutoff,
        exact,
        bound,
        holds: exact <= bound,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: f64,
    pub critical: f64,
    pub passes: bool,
}

/// Pearson chi-square uniformity test over `counts` bins at the given
/// significance level (e.g. 0.001). Passes when the statistic stays below
/// the critical value.
pub fn chi_square_uniform(counts: &[u64], significance: f64) -> ChiSquareResult {
    let k = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k;
    let statistic: f64 = counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = k - 1.0;
    let dist = ChiSquared::new(dof).expect("dof >= 1");
    let critical = dist.inverse_cdf(1.0 - significance);
    ChiSquareResult {
        statistic,
        dof,
        critical,
        passes: statistic <= critical,
    }
}
