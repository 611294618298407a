//! Association risk, adaptive threshold and association/tracklet uncertainty.
//!
//! All logarithms are natural. Similarities entering a logarithm are clamped
//! to `[clamp_eps, 1 - clamp_eps]`, which keeps the metrics finite for
//! cosine values at or below zero.

use crate::error::{Error, Result};

/// Margins on the assigned similarity (`m1`) and the runner-up gap (`m2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyMargins {
    pub m1: f64,
    pub m2: f64,
    pub clamp_eps: f64,
}

impl Default for UncertaintyMargins {
    fn default() -> Self {
        UncertaintyMargins { m1: 0.5, m2: 0.05, clamp_eps: 1e-6 }
    }
}

impl UncertaintyMargins {
    pub fn new(m1: f64, m2: f64, clamp_eps: f64) -> Result<Self> {
        let m = UncertaintyMargins { m1, m2, clamp_eps };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0 && self.m1 < 1.0) {
            return Err(Error::config("m1", "must lie in (0, 1)"));
        }
        if !(self.m2 > 0.0 && self.m2 < 1.0) {
            return Err(Error::config("m2", "must lie in (0, 1)"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::config("clamp_eps", "must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Outcome of verifying one association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationVerdict {
    /// Assigned similarity.
    pub c1: f64,
    /// Strongest competing similarity in the same row.
    pub c2: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub delta: f64,
    pub uncertain: bool,
}

fn clamp_similarity(c: f64, eps: f64) -> f64 {
    c.clamp(eps, 1.0 - eps)
}

/// `σ = −ln c1 − ln(1 − c2)` on clamped similarities.
pub fn association_risk(c1: f64, c2: f64, clamp_eps: f64) -> f64 {
    let c1 = clamp_similarity(c1, clamp_eps);
    let c2 = clamp_similarity(c2, clamp_eps);
    -c1.ln() - (1.0 - c2).ln()
}

/// `γ = −ln m1 − ln(1 + m2 − c1)`; the second log argument is floored at
/// `clamp_eps`.
pub fn adaptive_threshold(c1: f64, margins: &UncertaintyMargins) -> f64 {
    let arg = (1.0 + margins.m2 - c1).max(margins.clamp_eps);
    -margins.m1.ln() - arg.ln()
}

/// `δ = σ − γ`; the association is uncertain when `δ > 0`.
pub fn association_uncertainty(c1: f64, c2: f64, margins: &UncertaintyMargins) -> AssociationVerdict {
    let sigma = association_risk(c1, c2, margins.clamp_eps);
    let gamma = adaptive_threshold(c1, margins);
    let delta = sigma - gamma;
    AssociationVerdict { c1, c2, sigma, gamma, delta, uncertain: delta > 0.0 }
}

/// Largest entry of `row` other than `assigned`; `0` for a single-entry row.
pub fn second_best(row: &[f64], assigned: usize) -> f64 {
    debug_assert!(assigned < row.len());
    row.iter()
        .enumerate()
        .filter(|&(j, _)| j != assigned)
        .map(|(_, &v)| v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or(0.0)
}

/// `Ω = (1/n) Σ exp(δ_s)` over a tracklet's association history.
pub fn tracklet_uncertainty(deltas: &[f64]) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(deltas.iter().map(|d| d.exp()).sum::<f64>() / deltas.len() as f64)
}
