//! Equilibrium certificates: a fixed-point oracle that produces them and the
//! checks that accept or reject them.
//!
//! For linear utilities a bundle is optimal exactly when it only contains
//! goods of maximum bang-per-buck `a_ij / p_j`, and that maximum is then
//! `u_i / p_i`. The checks below test this directly instead of solving each
//! player's demand problem.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{exchange, lazy_pr_step};
use crate::econ::{
    normalize_money, Allocation, Economy, EquilibriumCertificate, MarketState, PriceVector,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::union_find::{sets, UnionFind};

/// Allocation entries below this are treated as zero in certificates and
/// support graphs.
pub const EPS_SUPPORT: f64 = 1e-7;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;
/// Savings fraction the oracle runs the lazy dynamic with.
pub const ORACLE_ALPHA: f64 = 0.5;

/// How far a certificate is from satisfying the equilibrium conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max_j |sum_i x_ij - 1|`.
    pub clearing_residual: f64,
    /// `max_i |sum_j b_ij - p_i|`.
    pub budget_residual: f64,
    /// Largest relative excess of any bang-per-buck over `u_i / p_i`.
    pub optimality_residual: f64,
    /// Largest relative gap between bang-per-buck and `u_i / p_i` on purchased goods.
    pub support_residual: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.clearing_residual
            .max(self.budget_residual)
            .max(self.optimality_residual)
            .max(self.support_residual)
    }

    pub fn accepted(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Best iterate of a failed oracle run.
#[derive(Debug, Clone)]
pub struct NonConvergence {
    pub iterations: usize,
    pub best: EquilibriumCertificate,
    pub residuals: ResidualReport,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// `None` starts from uniform bids and equal budgets; `Some(seed)` from
    /// random bids and budgets drawn with that seed.
    pub seed: Option<u64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            seed: None,
        }
    }
}

fn oracle_start(economy: &Economy, seed: Option<u64>) -> Result<MarketState> {
    let n = economy.n();
    let s = match seed {
        None => MarketState::uniform_normalized(economy)?,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let budgets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            let mut bids = Matrix::zeros(n);
            for i in 0..n {
                let weights: Vec<f64> = (0..n)
                    .map(|j| {
                        if economy.valuation(i, j) > 0.0 {
                            rng.gen_range(0.05..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                for j in 0..n {
                    bids[(i, j)] = weights[j] / total * budgets[i];
                }
            }
            MarketState::without_bank(bids)?
        }
    };
    normalize_money(&s.with_matching_bank(economy.alpha()))
}

/// Reads a certificate off a market state: normalized prices, allocation with
/// entries below [`EPS_SUPPORT`] dropped and columns renormalized.
pub fn certificate_from_state(
    economy: &Economy,
    s: &MarketState,
    tol: f64,
) -> Result<EquilibriumCertificate> {
    let n = economy.n();
    let ex = exchange(economy, &s.bids);
    let total: f64 = ex.prices.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMoney(total));
    }
    let p: Vec<f64> = ex.prices.iter().map(|p| p / total).collect();
    let mut x = ex.allocation.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            if x[(i, j)] < EPS_SUPPORT {
                x[(i, j)] = 0.0;
            }
            col += x[(i, j)];
        }
        if col > 0.0 {
            for i in 0..n {
                x[(i, j)] /= col;
            }
        }
    }
    EquilibriumCertificate::from_parts(economy, Allocation(x), PriceVector(p), tol)
}

/// Computes an equilibrium by running lazy proportional response with every
/// savings fraction at one half until the state is a verified fixed point.
pub fn solve_equilibrium(
    economy: &Economy,
    tol: f64,
    max_iters: usize,
) -> Result<EquilibriumCertificate> {
    solve_equilibrium_with(
        economy,
        &SolveOptions {
            tol,
            max_iters,
            seed: None,
        },
    )
}

pub fn solve_equilibrium_with(
    economy: &Economy,
    opts: &SolveOptions,
) -> Result<EquilibriumCertificate> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let lazy = economy.with_uniform_alpha(ORACLE_ALPHA)?;
    let mut s = oracle_start(&lazy, opts.seed)?;
    let mut best: Option<(EquilibriumCertificate, ResidualReport)> = None;
    let mut consider = |s: &MarketState| -> Result<Option<EquilibriumCertificate>> {
        let mut c = certificate_from_state(economy, s, opts.tol)?;
        let r = verify_equilibrium(economy, &c, opts.tol)?;
        c.residuals = Some(r);
        if r.accepted(opts.tol) {
            return Ok(Some(c));
        }
        if best.as_ref().is_none_or(|(_, b)| r.max() < b.max()) {
            best = Some((c, r));
        }
        Ok(None)
    };
    for _ in 0..opts.max_iters {
        let next = lazy_pr_step(&lazy, &s)?;
        let spend: f64 = next.budget.iter().sum();
        let ex = exchange(&lazy, &next.bids);
        let gap = crate::matrix::max_abs_diff(&next.budget, &ex.prices) / spend;
        let change = next.bids.max_abs_diff(&s.bids) / spend;
        s = next;
        if gap <= opts.tol && change <= opts.tol {
            if let Some(c) = consider(&s)? {
                return Ok(c);
            }
        }
    }
    if let Some(c) = consider(&s)? {
        return Ok(c);
    }
    let (best, residuals) = best.expect("at least one candidate was considered");
    Err(Error::NonConvergence(Box::new(NonConvergence {
        iterations: opts.max_iters,
        best,
        residuals,
    })))
}

/// Measures how far a certificate is from an equilibrium of `economy`.
pub fn verify_equilibrium(
    economy: &Economy,
    c: &EquilibriumCertificate,
    tol: f64,
) -> Result<ResidualReport> {
    let n = economy.n();
    if c.p_star.len() != n || c.x_star.n() != n || c.u_star.len() != n || c.b_star.n() != n {
        return Err(Error::MalformedCertificate(format!(
            "certificate shapes do not match an economy of {n} players"
        )));
    }
    let finite = c.p_star.iter().all(|v| v.is_finite())
        && c.u_star.iter().all(|v| v.is_finite())
        && c.x_star
            .as_slice()
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        && c.b_star.as_slice().iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::MalformedCertificate(
            "entries must be finite and allocations non-negative".into(),
        ));
    }
    if let Some(j) = c.p_star.iter().position(|&p| p <= 0.0) {
        return Err(Error::MalformedCertificate(format!(
            "price of good {} is {}, must be positive",
            j + 1,
            c.p_star[j]
        )));
    }
    let p = &c.p_star;
    let x = &c.x_star;
    let u = crate::dynamics::utilities(economy, x);
    let consistency = tol.max(1e-9);
    for i in 0..n {
        if (u[i] - c.u_star[i]).abs() > consistency * u[i].abs().max(1.0) {
            return Err(Error::MalformedCertificate(format!(
                "u_star[{}] = {} but the allocation gives {}",
                i + 1,
                c.u_star[i],
                u[i]
            )));
        }
    }

    let clearing_residual = x
        .col_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let budget_residual = c
        .b_star
        .row_sums()
        .iter()
        .zip(p.iter())
        .map(|(b, p)| (b - p).abs())
        .fold(0.0, f64::max);

    let mut optimality_residual: f64 = 0.0;
    let mut support_residual: f64 = 0.0;
    for i in 0..n {
        let level = u[i] / p[i];
        for j in 0..n {
            let a = economy.valuation(i, j);
            let bpb = a / p[j];
            let gap = if level > 0.0 { bpb / level - 1.0 } else { bpb };
            if a > 0.0 {
                optimality_residual = optimality_residual.max(gap.max(0.0));
            }
            if x[(i, j)] > EPS_SUPPORT {
                support_residual = support_residual.max(gap.abs());
            }
        }
    }
    Ok(ResidualReport {
        clearing_residual,
        budget_residual,
        optimality_residual,
        support_residual,
    })
}

/// `sum_i w_i log u_i` over players with positive weight.
pub fn eg_objective(weights: &[f64], u: &[f64]) -> Result<f64> {
    if weights.len() != u.len() {
        return Err(Error::Shape(
            "weights and utilities differ in length".into(),
        ));
    }
    let mut total = 0.0;
    for (i, (&w, &ui)) in weights.iter().zip(u).enumerate() {
        if w > 0.0 {
            if !(ui > 0.0) {
                return Err(Error::Domain(format!(
                    "utility of player {} is {ui} but its weight is {w}",
                    i + 1
                )));
            }
            total += w * ui.ln();
        }
    }
    Ok(total)
}

/// Pairs an arbitrary allocation with the prices of a certificate.
///
/// Any feasible allocation giving every player its equilibrium utility forms
/// an equilibrium with any equilibrium price vector. Returns the residuals
/// of that pairing, or `HypothesisNotMet` when `x` is infeasible or its
/// utilities are not the certificate's.
pub fn cross_pair_check(
    economy: &Economy,
    x: &Allocation,
    c: &EquilibriumCertificate,
    tol: f64,
) -> Result<ResidualReport> {
    let n = economy.n();
    if x.n() != n {
        return Err(Error::Shape(format!("allocation is not {n}x{n}")));
    }
    if x.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::HypothesisNotMet(
            "allocation entries must be finite and non-negative".into(),
        ));
    }
    for (j, s) in x.col_sums().iter().enumerate() {
        if (s - 1.0).abs() > tol {
            return Err(Error::HypothesisNotMet(format!(
                "good {} is allocated {s}, not fully",
                j + 1
            )));
        }
    }
    let u = crate::dynamics::utilities(economy, x);
    for i in 0..n {
        if (u[i] - c.u_star[i]).abs() > tol * c.u_star[i].abs().max(1.0) {
            return Err(Error::HypothesisNotMet(format!(
                "player {} gets utility {} instead of the equilibrium {}",
                i + 1,
                u[i],
                c.u_star[i]
            )));
        }
    }
    let paired = EquilibriumCertificate::from_parts(economy, x.clone(), c.p_star.clone(), tol)?;
    verify_equilibrium(economy, &paired, tol)
}

/// Outcome of comparing two equilibrium price vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceRay {
    Parallel,
    NotParallel,
    /// The support graph of the first certificate is disconnected, so prices
    /// need not be unique up to scaling.
    Inapplicable,
}

/// Connected components of the graph on players with an edge `i - j`
/// whenever player `i` consumes more than `eps` of good `j`.
pub fn support_components(x: &Matrix, eps: f64) -> Vec<Vec<usize>> {
    let n = x.n();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in 0..n {
            if x[(i, j)] > eps {
                uf.union(i, j);
            }
        }
    }
    sets(uf)
}

/// Checks that two verified certificates have proportional prices, which
/// must hold when the first one's support graph is connected.
pub fn price_ray_check(
    economy: &Economy,
    c1: &EquilibriumCertificate,
    c2: &EquilibriumCertificate,
    tol: f64,
) -> Result<PriceRay> {
    for (k, c) in [c1, c2].into_iter().enumerate() {
        let r = verify_equilibrium(economy, c, c.tol)?;
        if !r.accepted(c.tol) {
            return Err(Error::Unverified(format!(
                "certificate {} has residual {} above its tolerance {}",
                k + 1,
                r.max(),
                c.tol
            )));
        }
    }
    if support_components(&c1.x_star, EPS_SUPPORT).len() > 1 {
        return Ok(PriceRay::Inapplicable);
    }
    let mut ratios: Vec<f64> = c1
        .p_star
        .iter()
        .zip(c2.p_star.iter())
        .map(|(a, b)| a / b)
        .collect();
    let spread = {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        ratios
            .iter_mut()
            .map(|r| (*r - median).abs())
            .fold(0.0, f64::max)
    };
    Ok(if spread <= tol {
        PriceRay::Parallel
    } else {
        PriceRay::NotParallel
    })
}
