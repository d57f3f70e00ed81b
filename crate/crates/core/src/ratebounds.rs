//! Closed-form statistical rates for subspace estimation, with unknown
//! absolute constants set to one. Only ratios between configurations are
//! meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Largest eigenvalue of the diversity matrix.
    pub lambda1: f64,
    /// k-th eigenvalue of the diversity matrix.
    pub lambdak: f64,
    /// Size of the selected subset.
    pub s_size: usize,
    /// Head-direction weights `β_j = m_j / N`, nonincreasing.
    pub beta: Vec<f64>,
}

impl RateInputs {
    fn check_spectrum(&self) -> Result<()> {
        if !(self.lambdak > 0.0 && self.lambda1 >= self.lambdak && self.lambda1.is_finite()) {
            return Err(Error::Domain(format!(
                "need λ₁ ≥ λ_k > 0, got λ₁ = {}, λ_k = {}",
                self.lambda1, self.lambdak
            )));
        }
        if self.n == 0 || self.n < self.m {
            return Err(Error::Domain(format!(
                "need N ≥ M ≥ 1, got N = {}, M = {}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

/// `√(Md/(N²λ²))`, the term shared by the upper and lower bounds.
fn source_term(m: f64, d: f64, n: f64, lambda: f64) -> f64 {
    (m * d / (n * n * lambda * lambda)).sqrt()
}

/// `√(dλ₁/(Nλ_k²)) + √(Md/(N²λ_k²))`, capped at 1.
pub fn sota_upper_general(inp: &RateInputs) -> Result<f64> {
    inp.check_spectrum()?;
    let (d, n, m) = (inp.d as f64, inp.n as f64, inp.m as f64);
    let first = (d * inp.lambda1 / (n * inp.lambdak * inp.lambdak)).sqrt();
    Ok((first + source_term(m, d, n, inp.lambdak)).min(1.0))
}

/// `√(d/(Nλ_k)) + √(Md/(N²λ_k²))`, capped at 1.
pub fn sota_lower_general(inp: &RateInputs) -> Result<f64> {
    let (d, n, m) = (inp.d as f64, inp.n as f64, inp.m as f64);
    if inp.n == 0 || inp.n < inp.m {
        return Err(Error::Domain(format!(
            "need N ≥ M ≥ 1, got N = {}, M = {}",
            inp.n, inp.m
        )));
    }
    if !(inp.lambdak >= 0.0) {
        return Err(Error::Domain(format!("λ_k = {} is negative", inp.lambdak)));
    }
    if inp.lambdak == 0.0 {
        return Ok(1.0);
    }
    let first = (d / (n * inp.lambdak)).sqrt();
    Ok((first + source_term(m, d, n, inp.lambdak)).min(1.0))
}

/// `√(d/(Nβ_k)) + √(|S|d/(N²β_k²))` for a genie-balanced subset.
pub fn genie_balanced_upper(inp: &RateInputs) -> Result<f64> {
    let beta_k = inp.beta.iter().copied().fold(f64::INFINITY, f64::min);
    if inp.beta.is_empty() || !(beta_k > 0.0) {
        return Err(Error::Domain("β must be nonempty and positive".into()));
    }
    if inp.n == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    let (d, n) = (inp.d as f64, inp.n as f64);
    Ok((d / (n * beta_k)).sqrt() + source_term(inp.s_size as f64, d, n, beta_k))
}
