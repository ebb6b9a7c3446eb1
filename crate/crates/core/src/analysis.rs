//! Limit-cycle detection, equivalence classes of a limit allocation and
//! convergence metrics over recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Mode, StepRecord, Trajectory};
use crate::econ::EquilibriumCertificate;
use crate::equilibrium::EPS_SUPPORT;
use crate::error::{Error, Result};
use crate::matrix::{max_abs_diff, Matrix};
use crate::union_find::{sets, UnionFind};

pub const DEFAULT_MAX_PERIOD: usize = 64;
/// Detection tolerance for cycles that are exact from the start.
pub const EXACT_CYCLE_TOL: f64 = 1e-8;
/// Detection tolerance for cycles only approached in the limit.
pub const ASYMPTOTIC_CYCLE_TOL: f64 = 1e-4;

/// Players `i` and `k` are related when both hold more than `eps` of a
/// common good; returns the classes of the transitive closure, each sorted,
/// ordered by smallest member.
pub fn equivalence_classes(x: &Matrix, eps: f64) -> Vec<Vec<usize>> {
    let n = x.n();
    let mut uf = UnionFind::new(n);
    for j in 0..n {
        let mut first = None;
        for i in 0..n {
            if x[(i, j)] > eps {
                match first {
                    None => first = Some(i),
                    Some(f) => {
                        uf.union(f, i);
                    }
                }
            }
        }
    }
    sets(uf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStructure {
    pub classes: Vec<Vec<usize>>,
    /// Times of the sampled records.
    pub times: Vec<usize>,
    /// `lambda[c][k]`: common price ratio of class `c` at `times[k]`.
    pub lambda: Vec<Vec<f64>>,
    pub max_within_class_spread: f64,
    pub valid: bool,
    /// Class `c` buys a good owned by class `d` (self-purchases omitted).
    pub purchase_edges: Vec<(usize, usize)>,
    /// The purchase digraph is one directed cycle through every class.
    pub is_single_cycle: bool,
}

fn market_records(traj: &Trajectory) -> Result<&[StepRecord]> {
    if traj.mode == Mode::Tft {
        return Err(Error::NotApplicable(
            "tit-for-tat trajectories carry no prices".into(),
        ));
    }
    Ok(&traj.records)
}

/// Price ratio of each good against `p_star` rescaled to the same total.
fn price_ratios(p: &[f64], p_star: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    let total_star: f64 = p_star.iter().sum();
    p.iter()
        .zip(p_star)
        .map(|(p, ps)| (p / total) / (ps / total_star))
        .collect()
}

/// Splits the players into classes read off the last recorded allocation
/// and measures, over the last `window` records, how far the price ratios
/// `p_j(t) / p*_j` of goods in one class are from a common value.
///
/// Prices and `p*` are compared at equal totals. Fails with `NotApplicable`
/// unless the allocation moved by at most `tol` across the window.
pub fn lambda_structure(
    traj: &Trajectory,
    c: &EquilibriumCertificate,
    window: usize,
    tol: f64,
) -> Result<ClassStructure> {
    let records = market_records(traj)?;
    if records.is_empty() || window == 0 {
        return Err(Error::NotApplicable("no records to analyze".into()));
    }
    if c.n() != records[0].prices.len() {
        return Err(Error::Shape(
            "certificate size differs from the trajectory".into(),
        ));
    }
    let tail = &records[records.len().saturating_sub(window)..];
    let x_last = &tail.last().expect("non-empty").allocation;
    let drift = tail
        .iter()
        .map(|r| r.allocation.max_abs_diff(x_last))
        .fold(0.0, f64::max);
    if drift > tol {
        return Err(Error::NotApplicable(format!(
            "allocation still moves by {drift:e} over the window, above {tol:e}"
        )));
    }
    let classes = equivalence_classes(x_last, EPS_SUPPORT);
    let n = x_last.n();
    let mut owner = vec![0; n];
    for (k, cls) in classes.iter().enumerate() {
        for &i in cls {
            owner[i] = k;
        }
    }

    let mut lambda = vec![Vec::with_capacity(tail.len()); classes.len()];
    let mut spread: f64 = 0.0;
    for r in tail {
        let ratios = price_ratios(&r.prices, &c.p_star);
        let total: f64 = r.prices.iter().sum();
        let total_star: f64 = c.p_star.iter().sum();
        for (k, cls) in classes.iter().enumerate() {
            let share: f64 = cls.iter().map(|&j| r.prices[j]).sum::<f64>() / total;
            let share_star: f64 = cls.iter().map(|&j| c.p_star[j]).sum::<f64>() / total_star;
            let l = share / share_star;
            for &j in cls {
                spread = spread.max((ratios[j] - l).abs());
            }
            lambda[k].push(l);
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if x_last[(i, j)] > EPS_SUPPORT && owner[i] != owner[j] {
                edges.push((owner[i], owner[j]));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let is_single_cycle = single_cycle(classes.len(), &edges);

    Ok(ClassStructure {
        classes,
        times: tail.iter().map(|r| r.t).collect(),
        lambda,
        max_within_class_spread: spread,
        valid: spread <= tol,
        purchase_edges: edges,
        is_single_cycle,
    })
}

fn single_cycle(k: usize, edges: &[(usize, usize)]) -> bool {
    if k < 2 || edges.len() != k {
        return false;
    }
    let mut next = vec![usize::MAX; k];
    for &(a, b) in edges {
        if next[a] != usize::MAX {
            return false;
        }
        next[a] = b;
    }
    let mut seen = vec![false; k];
    let mut v = 0;
    for _ in 0..k {
        if next[v] == usize::MAX || seen[v] {
            return false;
        }
        seen[v] = true;
        v = next[v];
    }
    v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub detected: bool,
    /// In time steps. Period 1 is convergence to a fixed point.
    pub period: Option<usize>,
    pub anchor_t: Option<usize>,
    /// For a detected cycle, the largest distance between signals one period
    /// apart in the trailing third; otherwise the smallest such distance
    /// over all periods tried.
    pub max_deviation: f64,
    /// Time steps between consecutive records.
    pub stride: usize,
}

/// Looks for the smallest lag `k <= max_period` (in records) at which the
/// cycle signal repeats within `tol` across the trailing third of the
/// records. `max_period` is capped at a third of the record count.
pub fn detect_cycle(traj: &Trajectory, max_period: usize, tol: f64) -> CycleReport {
    let signals: Vec<&[f64]> = traj.records.iter().map(|r| r.cycle_signal()).collect();
    let m = signals.len();
    let window = m / 3;
    let stride = traj.stride.max(1);
    let mut best = f64::INFINITY;
    for k in 1..=max_period.min(window) {
        let dev = (m - window..m)
            .map(|r| max_abs_diff(signals[r], signals[r - k]))
            .fold(0.0, f64::max);
        if dev <= tol {
            let mut first = m - window;
            while first > k && max_abs_diff(signals[first - 1], signals[first - 1 - k]) <= tol {
                first -= 1;
            }
            return CycleReport {
                detected: true,
                period: Some(k * stride),
                anchor_t: Some(traj.records[first - k].t),
                max_deviation: dev,
                stride,
            };
        }
        best = best.min(dev);
    }
    CycleReport {
        detected: false,
        period: None,
        anchor_t: None,
        max_deviation: best,
        stride,
    }
}

/// Per-record distances to the limit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub times: Vec<usize>,
    /// `max_i |u_i(t) - u*_i|`.
    pub utility_distance: Vec<f64>,
    /// `max_ij |x_ij(t) - xbar_ij|` with `xbar` the trailing-third average.
    pub allocation_distance: Vec<f64>,
    /// `max_j |p_j(t) - p*_j|` with `p*` rescaled to the total of `p(t)`.
    /// Empty for tit-for-tat.
    pub price_distance: Vec<f64>,
}

impl ConvergenceMetrics {
    pub fn final_utility_distance(&self) -> Option<f64> {
        self.utility_distance.last().copied()
    }

    pub fn final_allocation_distance(&self) -> Option<f64> {
        self.allocation_distance.last().copied()
    }

    pub fn final_price_distance(&self) -> Option<f64> {
        self.price_distance.last().copied()
    }
}

/// Trailing-third average of the recorded allocations.
pub fn limit_allocation(traj: &Trajectory) -> Option<Matrix> {
    let m = traj.records.len();
    if m == 0 {
        return None;
    }
    let from = m - (m / 3).max(1);
    let n = traj.records[0].allocation.n();
    let mut avg = Matrix::zeros(n);
    for r in &traj.records[from..] {
        for i in 0..n {
            for j in 0..n {
                avg[(i, j)] += r.allocation[(i, j)];
            }
        }
    }
    avg.scale(1.0 / (m - from) as f64);
    Some(avg)
}

pub fn price_distance(p: &[f64], p_star: &[f64]) -> f64 {
    let total: f64 = p.iter().sum();
    let total_star: f64 = p_star.iter().sum();
    p.iter()
        .zip(p_star)
        .map(|(p, ps)| (p - ps * total / total_star).abs())
        .fold(0.0, f64::max)
}

pub fn convergence_metrics(traj: &Trajectory, c: &EquilibriumCertificate) -> ConvergenceMetrics {
    let Some(x_lim) = limit_allocation(traj) else {
        return ConvergenceMetrics::default();
    };
    let mut out = ConvergenceMetrics::default();
    for r in &traj.records {
        out.times.push(r.t);
        out.utility_distance
            .push(max_abs_diff(&r.utilities, &c.u_star));
        out.allocation_distance
            .push(r.allocation.max_abs_diff(&x_lim));
        if traj.mode != Mode::Tft {
            out.price_distance
                .push(price_distance(&r.prices, &c.p_star));
        }
    }
    out
}

/// `sum_j p*_j log(p_j / p*_j)` with both vectors normalized to total 1;
/// constant along a limit cycle.
pub fn price_log_ratio(p: &[f64], p_star: &[f64]) -> Result<f64> {
    let total: f64 = p.iter().sum();
    let total_star: f64 = p_star.iter().sum();
    let mut s = 0.0;
    for (j, (&pj, &ps)) in p.iter().zip(p_star).enumerate() {
        if ps > 0.0 {
            if !(pj > 0.0) {
                return Err(Error::InfiniteDivergence(j));
            }
            let w = ps / total_star;
            s += w * ((pj / total) / w).ln();
        }
    }
    Ok(s)
}
