//! KL-divergence potential for the proportional response dynamics.
//!
//! With equilibrium bids `b*` and prices `p*`,
//!
//! ```text
//! log f(t) = sum_ij b*_ij log(b*_ij / b_ij(t))
//!          + sum_i ((1 - alpha_i) / alpha_i) p*_i log(p*_i / B_i(t))
//! ```
//!
//! and one round of the lazy dynamic changes it by exactly
//! `log g(t) + log h(t)`, where
//!
//! ```text
//! log g(t) = sum_i p*_i log(u_i(t) / u*_i)
//! log h(t) = sum_i p*_i [ log p_i + ((1 - alpha_i) / alpha_i) log B_i
//!                         - (1 / alpha_i) log(alpha_i p_i + (1 - alpha_i) B_i) ]
//! ```
//!
//! Both factors are non-positive, so `log f` never increases. Everything is
//! evaluated in the log domain with natural logarithms; terms with zero
//! weight contribute nothing.

use serde::{Deserialize, Serialize};

use crate::dynamics::allocate;
use crate::econ::{Economy, EquilibriumCertificate, Exchange, MarketState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    pub t: usize,
    pub log_f: f64,
    pub log_g: f64,
    pub log_h: f64,
    /// `|log f(t+1) - log f(t) - log g(t) - log h(t)|`, once `t + 1` is known.
    pub identity_residual: Option<f64>,
}

/// `sum_{i: p_i > 0} p_i log(p_i / q_i)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "kl_divergence: lengths {} and {} differ",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Err(Error::InfiniteDivergence(k));
            }
            total += pk * (pk / qk).ln();
        }
    }
    Ok(total)
}

fn savings_weight(alpha: f64) -> f64 {
    (1.0 - alpha) / alpha
}

fn log_f(c: &EquilibriumCertificate, s: &MarketState, alpha: &[f64]) -> Result<f64> {
    let n = c.n();
    if s.n() != n || alpha.len() != n {
        return Err(Error::Shape("state and certificate sizes differ".into()));
    }
    let mut total = kl_divergence(c.b_star.as_slice(), s.bids.as_slice())?;
    for i in 0..n {
        let w = savings_weight(alpha[i]);
        let p = c.p_star[i];
        if w == 0.0 || p <= 0.0 {
            continue;
        }
        let b = s.budget[i];
        if b <= 0.0 {
            return Err(Error::InfiniteDivergence(n * n + i));
        }
        total += w * p * (p / b).ln();
    }
    Ok(total)
}

/// `log f` of a market state against a certificate, using the economy's
/// savings fractions.
pub fn f_value(c: &EquilibriumCertificate, s: &MarketState, e: &Economy) -> Result<f64> {
    log_f(c, s, e.alpha())
}

/// `log g = sum_{i: p*_i > 0} p*_i log(u_i / u*_i)`.
pub fn g_value(c: &EquilibriumCertificate, u: &[f64]) -> Result<f64> {
    if u.len() != c.n() {
        return Err(Error::Shape(
            "utility vector size differs from certificate".into(),
        ));
    }
    let mut total = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        let w = c.p_star[i];
        if w <= 0.0 {
            continue;
        }
        let star = c.u_star[i];
        if !(ui > 0.0 && star > 0.0) {
            return Err(Error::Domain(format!(
                "log g needs positive utilities for player {}, got u = {ui}, u* = {star}",
                i + 1
            )));
        }
        total += w * (ui / star).ln();
    }
    Ok(total)
}

/// `log h`; identically zero when every player spends all of its money.
pub fn h_value(
    c: &EquilibriumCertificate,
    p: &[f64],
    budget: &[f64],
    alpha: &[f64],
) -> Result<f64> {
    let n = c.n();
    if p.len() != n || budget.len() != n || alpha.len() != n {
        return Err(Error::Shape("h_value: input sizes differ".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let w = c.p_star[i];
        let a = alpha[i];
        if w <= 0.0 || a == 1.0 {
            continue;
        }
        let (pi, bi) = (p[i], budget[i]);
        if !(pi > 0.0 && bi > 0.0) {
            return Err(Error::Domain(format!(
                "log h needs positive price and budget for player {}, got p = {pi}, B = {bi}",
                i + 1
            )));
        }
        let mixed = a * pi + (1.0 - a) * bi;
        total += w * (pi.ln() + savings_weight(a) * bi.ln() - mixed.ln() / a);
    }
    Ok(total)
}

/// Largest per-good gap in
/// `sum_i b_ij log(b'_ij / b_ij) = p_j log(p'_j / p_j) + p_j sum_i x_ij log(x'_ij / x_ij)`.
pub fn kl_decomposition_residual(b: &Matrix, b_prime: &Matrix) -> Result<f64> {
    let n = b.n();
    if b_prime.n() != n {
        return Err(Error::Shape("bid matrices differ in size".into()));
    }
    let (x, p) = allocate(b);
    let (xp, pp) = allocate(b_prime);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut lhs = 0.0;
        let mut alloc_term = 0.0;
        for i in 0..n {
            let bij = b[(i, j)];
            if bij <= 0.0 {
                continue;
            }
            if b_prime[(i, j)] <= 0.0 {
                return Err(Error::InfiniteDivergence(i * n + j));
            }
            lhs += bij * (b_prime[(i, j)] / bij).ln();
            alloc_term += x[(i, j)] * (xp[(i, j)] / x[(i, j)]).ln();
        }
        let rhs = if p[j] > 0.0 {
            p[j] * (pp[j] / p[j]).ln() + p[j] * alloc_term
        } else {
            0.0
        };
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Evaluates `log f`, `log g` and `log h` along a trajectory.
#[derive(Debug, Clone)]
pub struct LyapunovTracker {
    certificate: EquilibriumCertificate,
    alpha: Vec<f64>,
}

impl LyapunovTracker {
    pub fn new(certificate: EquilibriumCertificate, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != certificate.n() {
            return Err(Error::Shape("alpha size differs from certificate".into()));
        }
        Ok(Self { certificate, alpha })
    }

    pub fn certificate(&self) -> &EquilibriumCertificate {
        &self.certificate
    }

    pub fn evaluate(&self, s: &MarketState, ex: &Exchange) -> Result<LyapunovRecord> {
        let c = &self.certificate;
        Ok(LyapunovRecord {
            t: s.t,
            log_f: log_f(c, s, &self.alpha)?,
            log_g: g_value(c, &ex.utilities)?,
            log_h: h_value(c, &ex.prices, &s.budget, &self.alpha)?,
            identity_residual: None,
        })
    }
}
