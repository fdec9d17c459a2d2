//! Derivation of every pipeline constant from `(n, epsilon, theta)`, plus
//! the advisory main-theorem precondition check.
//!
//! The three phases use probabilities `p_1 = eps_1 log n / (2n)`,
//! `p_2 = (1 + eps_2) log n / (2n)`, `p_3 = eps_3 log n / (2n)` and color
//! class sizes `theta_1 n`, `(1 + theta_2) n`, `theta_3 n`, where
//! `eps_i = eps / 3`, `theta_1 = theta_3 = min(theta/3, eps_2/4)` and
//! `theta_2` absorbs the rest. All logarithms are natural.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("n = {0} out of domain (need n >= {1})")]
    Domain(u64, u64),
    #[error("epsilon and theta must be positive, got eps={0}, theta={1}")]
    NonPositive(f64, f64),
    #[error("derived probability p_{index} = {value} outside (0,1)")]
    ProbabilityRange { index: usize, value: f64 },
    #[error("infeasible color split: theta_2 = {0} <= 0")]
    InfeasibleSplit(f64),
    #[error("override probability p_{index} = {value} outside [0,1)")]
    OverrideRange { index: usize, value: f64 },
    #[error("kappa = {0} must be at least 1")]
    KappaRange(u64),
}

/// All derived constants for one problem size. Serializes flat with ASCII
/// symbol names; `L_formula` is `null` in JSON when it overflows `f64`.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSet {
    pub n: u64,
    pub epsilon: f64,
    pub theta: f64,
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    pub epsilon_3: f64,
    pub theta_1: f64,
    pub theta_2: f64,
    pub theta_3: f64,
    pub p_1: f64,
    pub p_2: f64,
    pub p_3: f64,
    pub kappa: u64,
    pub c1_size: u64,
    pub c2_size: u64,
    pub c3_size: u64,
    pub gamma: f64,
    #[serde(rename = "L_formula")]
    pub l_formula: f64,
    #[serde(rename = "L_formula_log10")]
    pub l_formula_log10: f64,
    #[serde(rename = "L_effective")]
    pub l_effective: u32,
    /// True when the effective segment length is smaller than the formula
    /// value (cap or explicit override).
    #[serde(rename = "L_capped")]
    pub l_capped: bool,
    /// Merged edge probability `1 - (1-p_1)^2 (1-p_2)^2 (1-p_3)^2`.
    pub p_merged: f64,
}

impl ParamSet {
    pub fn p(&self, i: usize) -> f64 {
        [self.p_1, self.p_2, self.p_3][i]
    }

    pub fn class_size(&self, i: usize) -> u64 {
        [self.c1_size, self.c2_size, self.c3_size][i]
    }

    /// Color classes are contiguous ranges: `C_1` first, then `C_2`, `C_3`.
    pub fn class_of(&self, c: u32) -> Option<usize> {
        let c = u64::from(c);
        if c == 0 || c > self.kappa {
            None
        } else if c <= self.c1_size {
            Some(0)
        } else if c <= self.c1_size + self.c2_size {
            Some(1)
        } else {
            Some(2)
        }
    }

    pub fn class_range(&self, i: usize) -> std::ops::RangeInclusive<u32> {
        let start = match i {
            0 => 1,
            1 => self.c1_size + 1,
            _ => self.c1_size + self.c2_size + 1,
        };
        let end = match i {
            0 => self.c1_size,
            1 => self.c1_size + self.c2_size,
            _ => self.kappa,
        };
        (start as u32)..=(end as u32)
    }

    pub fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    /// Dangerous-degree threshold for layer `i` (eqs. for `S_{0,i}`).
    pub fn s0_threshold(&self, i: usize) -> f64 {
        let ln_n = self.ln_n();
        match i {
            0 => self.epsilon_1 * self.theta_1 / 20.0 * ln_n,
            1 => ln_n / 20.0,
            _ => self.epsilon_3 * self.theta_3 / 20.0 * ln_n,
        }
    }

    /// Endpoint goodness threshold with the given denominator constant
    /// (180 during construction, 200 for the final contract).
    pub fn goodness_threshold(&self, denom: f64) -> f64 {
        self.epsilon_1 * self.theta_1 / (denom * self.l_effective as f64) * self.ln_n()
    }

    /// Derived undirected edge probability of the middle color-class graph.
    pub fn q2(&self) -> f64 {
        2.0 * self.p_2
            * (1.0 - self.p_2)
            * (self.c2_size as f64 / self.kappa as f64)
            * (1.0 - self.p_1).powi(2)
    }
}

fn finish(
    n: u64,
    epsilon: f64,
    theta: f64,
    eps_i: [f64; 3],
    theta_1: f64,
    theta_2: f64,
    theta_3: f64,
    p: [f64; 3],
    kappa: u64,
    l_override: Option<u32>,
) -> Result<ParamSet, ParamError> {
    if kappa == 0 {
        return Err(ParamError::KappaRange(kappa));
    }
    let nf = n as f64;
    let c1 = (theta_1 * nf).round().max(0.0) as u64;
    let c3 = (theta_3 * nf).round().max(0.0) as u64;
    if c1 + c3 > kappa {
        return Err(ParamError::InfeasibleSplit(theta_2));
    }
    let c2 = kappa - c1 - c3;

    let e3t3 = eps_i[2] * theta_3;
    let ln_l_formula = if e3t3 > 0.0 {
        (15.0f64.ln() + 40.0 / e3t3).max((7.0 / theta_1).ln())
    } else {
        f64::INFINITY
    };
    let l_formula = ln_l_formula.exp();
    let l_from_formula = if l_formula.is_finite() && l_formula < u32::MAX as f64 {
        (l_formula.ceil() as u32).max(2)
    } else {
        u32::MAX
    };
    let cap = ((n / 3) as u32).max(2);
    let l_effective = match l_override {
        Some(l) => l.max(2),
        None => l_from_formula.min(cap),
    };
    let l_capped = (l_effective as f64) < l_formula;

    let gamma = (0.25f64)
        .min(eps_i[0] * theta_1 / 4.0)
        .min(eps_i[2] * theta_3 / 4.0);

    let p_merged = 1.0 - (1.0 - p[0]).powi(2) * (1.0 - p[1]).powi(2) * (1.0 - p[2]).powi(2);

    Ok(ParamSet {
        n,
        epsilon,
        theta,
        epsilon_1: eps_i[0],
        epsilon_2: eps_i[1],
        epsilon_3: eps_i[2],
        theta_1,
        theta_2,
        theta_3,
        p_1: p[0],
        p_2: p[1],
        p_3: p[2],
        kappa,
        c1_size: c1,
        c2_size: c2,
        c3_size: c3,
        gamma,
        l_formula,
        l_formula_log10: ln_l_formula / std::f64::consts::LN_10,
        l_effective,
        l_capped,
        p_merged,
    })
}

/// Derives the full parameter set from `(n, epsilon, theta)`.
///
/// `l_override` replaces the formula value of the segment length `L`, which
/// is astronomically large for desk-scale `epsilon`, `theta`; without an
/// override the value is capped at `n/3` and flagged.
pub fn derive_parameters(
    n: u64,
    epsilon: f64,
    theta: f64,
    l_override: Option<u32>,
) -> Result<ParamSet, ParamError> {
    if n < 3 {
        return Err(ParamError::Domain(n, 3));
    }
    if epsilon <= 0.0 || theta <= 0.0 {
        return Err(ParamError::NonPositive(epsilon, theta));
    }
    let eps_i = [epsilon / 3.0; 3];
    let theta_1 = (theta / 3.0).min(eps_i[1] / 4.0);
    let theta_3 = theta_1;
    let theta_2 = theta - theta_1 - theta_3;
    if theta_2 <= 0.0 {
        return Err(ParamError::InfeasibleSplit(theta_2));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let p = [
        eps_i[0] * ln_n / (2.0 * nf),
        (1.0 + eps_i[1]) * ln_n / (2.0 * nf),
        eps_i[2] * ln_n / (2.0 * nf),
    ];
    for (i, &pi) in p.iter().enumerate() {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(ParamError::ProbabilityRange { index: i + 1, value: pi });
        }
    }
    let kappa = ((1.0 + theta) * nf).round() as u64;
    finish(n, epsilon, theta, eps_i, theta_1, theta_2, theta_3, p, kappa, l_override)
}

/// Builds a parameter set directly from explicit layer probabilities and a
/// color count, bypassing derivation. Epsilon-equivalents are inverted from
/// the probabilities so thresholds stay well-defined; probabilities may be
/// zero for degenerate experiments.
pub fn params_from_overrides(
    n: u64,
    p: [f64; 3],
    kappa: u64,
    l_override: Option<u32>,
) -> Result<ParamSet, ParamError> {
    if n < 3 {
        return Err(ParamError::Domain(n, 3));
    }
    for (i, &pi) in p.iter().enumerate() {
        if !(0.0..1.0).contains(&pi) {
            return Err(ParamError::OverrideRange { index: i + 1, value: pi });
        }
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let eps_i = [
        2.0 * nf * p[0] / ln_n,
        2.0 * nf * p[1] / ln_n - 1.0,
        2.0 * nf * p[2] / ln_n,
    ];
    let epsilon = eps_i[0] + eps_i[1] + eps_i[2];
    let theta = kappa as f64 / nf - 1.0;
    let theta_1 = (theta / 3.0).min((eps_i[1] / 4.0).max(0.0)).max(0.0);
    let theta_3 = theta_1;
    let theta_2 = theta - theta_1 - theta_3;
    finish(n, epsilon, theta, eps_i, theta_1, theta_2, theta_3, p, kappa, l_override)
}

/// Explicit merged-probability override: chooses the epsilon equivalent of
/// `p = (1 + eps) log n / n` and derives the standard split from it.
pub fn params_from_merged_override(
    n: u64,
    p: f64,
    kappa: u64,
    l_override: Option<u32>,
) -> Result<ParamSet, ParamError> {
    if n < 3 {
        return Err(ParamError::Domain(n, 3));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let epsilon = p * nf / ln_n - 1.0;
    let theta = kappa as f64 / nf - 1.0;
    if epsilon <= 0.0 || theta <= 0.0 {
        return Err(ParamError::NonPositive(epsilon, theta));
    }
    let eps_i = [epsilon / 3.0; 3];
    let theta_1 = (theta / 3.0).min(eps_i[1] / 4.0);
    let theta_3 = theta_1;
    let theta_2 = theta - theta_1 - theta_3;
    if theta_2 <= 0.0 {
        return Err(ParamError::InfeasibleSplit(theta_2));
    }
    let probs = [
        eps_i[0] * ln_n / (2.0 * nf),
        (1.0 + eps_i[1]) * ln_n / (2.0 * nf),
        eps_i[2] * ln_n / (2.0 * nf),
    ];
    for (i, &pi) in probs.iter().enumerate() {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(ParamError::ProbabilityRange { index: i + 1, value: pi });
        }
    }
    finish(n, epsilon, theta, eps_i, theta_1, theta_2, theta_3, probs, kappa, l_override)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreconditionReport {
    pub satisfied: bool,
    pub bound: f64,
}

/// Advisory check of the main-theorem precondition
/// `epsilon, theta > 100 / sqrt(log log n)`. The pipeline runs regardless;
/// reports record the flag.
pub fn check_theorem_preconditions(
    n: u64,
    epsilon: f64,
    theta: f64,
) -> Result<PreconditionReport, ParamError> {
    if n < 16 {
        return Err(ParamError::Domain(n, 16));
    }
    let bound = 100.0 / (n as f64).ln().ln().sqrt();
    Ok(PreconditionReport {
        satisfied: epsilon > bound && theta > bound,
        bound,
    })
}
