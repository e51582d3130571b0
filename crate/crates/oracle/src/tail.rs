//! Reference tail probabilities for sums of independent Bernoulli variables.

use marqoe_core::allocator::{clt_constraint_lhs, exact_tail, AllocError, ConstraintEval};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::report::{OracleReport, Tolerance};

pub const MAX_ENUMERATION: usize = 24;

/// `P(S >= k)` by visiting all `2^N` outcomes.
pub fn enumerate_tail(p: &[f64], k: usize) -> f64 {
    assert!(
        p.len() <= MAX_ENUMERATION,
        "enumeration limited to {MAX_ENUMERATION} variables"
    );
    let mut total = 0.0;
    for mask in 0u32..(1u32 << p.len()) {
        if (mask.count_ones() as usize) < k {
            continue;
        }
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
        }
        total += prob;
    }
    total
}

/// `P(Bin(n, q) >= k)` by direct summation of the mass function.
pub fn binomial_tail(n: usize, q: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || q == 0.0 {
        return 0.0;
    }
    if q == 1.0 {
        return 1.0;
    }
    (k..=n)
        .map(|j| (ln_binomial(n as u64, j as u64) + j as f64 * q.ln() + (n - j) as f64 * (1.0 - q).ln()).exp())
        .sum()
}

fn standard_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// `Φ⁻¹(p)` by bisection on the reference CDF.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Normal approximation of `P(S >= Nρ)` recomputed from scratch.
pub fn normal_tail(p: &[f64], rho: f64) -> f64 {
    let n = p.len() as f64;
    let mean: f64 = p.iter().sum();
    let sd = p.iter().map(|q| q * (1.0 - q)).sum::<f64>().sqrt();
    1.0 - normal_cdf((n * rho - mean) / sd)
}

/// Gap between the exact tail and its normal approximation.
pub fn compare_clt(p_hats: &[f64], rho: f64, tolerance: f64) -> Result<OracleReport, AllocError> {
    let exact = exact_tail(p_hats, rho)?;
    let approx = match clt_constraint_lhs(p_hats, rho)? {
        ConstraintEval::Clt { lhs } => 1.0 - normal_cdf(lhs),
        degenerate => {
            if degenerate.satisfied(0.0) {
                1.0
            } else {
                0.0
            }
        }
    };
    Ok(OracleReport::new(
        "clt_tail",
        p_hats.len(),
        exact,
        approx,
        Tolerance::Absolute(tolerance),
    ))
}

/// Whether the normal-approximation accept/reject decision at reliability
/// `ε` agrees with the exact one, or the exact tail lies within `band` of
/// `ε` where disagreement is tolerated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionCheck {
    pub exact_tail: f64,
    pub exact_accepts: bool,
    pub clt_accepts: bool,
    pub in_band: bool,
}

impl DecisionCheck {
    pub fn consistent(&self) -> bool {
        self.exact_accepts == self.clt_accepts || self.in_band
    }
}

pub fn check_decision(p_hats: &[f64], rho: f64, epsilon: f64, band: f64) -> Result<DecisionCheck, AllocError> {
    let exact = exact_tail(p_hats, rho)?;
    let eval = clt_constraint_lhs(p_hats, rho)?;
    let phi_inv = marqoe_core::allocator::inverse_normal_cdf(1.0 - epsilon)?;
    Ok(DecisionCheck {
        exact_tail: exact,
        exact_accepts: exact >= epsilon,
        clt_accepts: eval.satisfied(phi_inv),
        in_band: (exact - epsilon).abs() <= band,
    })
}
