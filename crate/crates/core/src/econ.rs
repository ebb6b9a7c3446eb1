//! Instance and state data model shared by every other module.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::equilibrium::ResidualReport;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Kind of a single violated instance assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    Empty,
    Shape,
    NonFinite,
    NegativeValuation,
    ZeroRow,
    ZeroColumn,
    AlphaOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

/// Every violated instance assumption; the instance is valid iff this is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    fn push(&mut self, code: IssueCode, message: String) {
        self.issues.push(Issue { code, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("no issues");
        }
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}", issue.message)?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions on a valuation matrix and savings fractions.
///
/// Player and good indices in messages are 1-based.
pub fn validate_economy(valuations: &Matrix, alpha: &[f64]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = valuations.n();
    if n == 0 {
        report.push(IssueCode::Empty, "economy has no players".into());
        return report;
    }
    if alpha.len() != n {
        report.push(
            IssueCode::Shape,
            format!("alpha has {} entries, expected {n}", alpha.len()),
        );
    }
    for i in 0..n {
        for j in 0..n {
            let v = valuations[(i, j)];
            if !v.is_finite() {
                report.push(
                    IssueCode::NonFinite,
                    format!("valuation a[{},{}] is not finite", i + 1, j + 1),
                );
            } else if v < 0.0 {
                report.push(
                    IssueCode::NegativeValuation,
                    format!("valuation a[{},{}] = {v} is negative", i + 1, j + 1),
                );
            }
        }
    }
    for i in 0..n {
        if !valuations.row(i).iter().any(|&v| v > 0.0) {
            report.push(
                IssueCode::ZeroRow,
                format!("player {} values no good (row {} all zero)", i + 1, i + 1),
            );
        }
    }
    for j in 0..n {
        if !(0..n).any(|i| valuations[(i, j)] > 0.0) {
            report.push(
                IssueCode::ZeroColumn,
                format!(
                    "good {} is valued by nobody (column {} all zero)",
                    j + 1,
                    j + 1
                ),
            );
        }
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !(a > 0.0 && a <= 1.0) {
            report.push(
                IssueCode::AlphaOutOfRange,
                format!("alpha[{}] = {a} is outside (0, 1]", i + 1),
            );
        }
    }
    report
}

/// An exchange economy with linear utilities: `n` players, player `j` owning
/// one unit of good `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Economy {
    valuations: Matrix,
    alpha: Vec<f64>,
}

impl Economy {
    pub fn new(valuations: Matrix, alpha: Vec<f64>) -> Result<Self> {
        let report = validate_economy(&valuations, &alpha);
        if !report.is_valid() {
            return Err(Error::InvalidEconomy(report));
        }
        Ok(Self { valuations, alpha })
    }

    /// Economy in which every player spends all of its money each round.
    pub fn non_lazy(valuations: Matrix) -> Result<Self> {
        let n = valuations.n();
        Self::new(valuations, vec![1.0; n])
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::non_lazy(Matrix::from_rows(rows)?)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.valuations.n()
    }

    #[inline]
    pub fn valuations(&self) -> &Matrix {
        &self.valuations
    }

    #[inline]
    pub fn valuation(&self, i: usize, j: usize) -> f64 {
        self.valuations[(i, j)]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Same valuations with different savings fractions.
    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(self.valuations.clone(), alpha)
    }

    pub fn with_uniform_alpha(&self, alpha: f64) -> Result<Self> {
        self.with_alpha(vec![alpha; self.n()])
    }
}

/// Money-side state of the market at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub t: usize,
    /// `bids[(i, j)]`: money player `i` bids on good `j`.
    pub bids: Matrix,
    /// Spending budget of each player; equals the row sums of `bids`.
    pub budget: Vec<f64>,
    /// Money each player holds back in the bank.
    pub bank: Vec<f64>,
}

impl MarketState {
    /// State at `t = 0` whose budgets are the row sums of `bids`.
    pub fn new(bids: Matrix, bank: Vec<f64>) -> Result<Self> {
        let n = bids.n();
        if bank.len() != n {
            return Err(Error::Shape(format!(
                "bank has {} entries, expected {n}",
                bank.len()
            )));
        }
        if let Some(v) = bids
            .as_slice()
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidState(format!(
                "bids must be finite and non-negative, found {v}"
            )));
        }
        if let Some(v) = bank.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidState(format!(
                "bank balances must be finite and non-negative, found {v}"
            )));
        }
        let budget = bids.row_sums();
        Ok(Self {
            t: 0,
            bids,
            budget,
            bank,
        })
    }

    pub fn without_bank(bids: Matrix) -> Result<Self> {
        let n = bids.n();
        Self::new(bids, vec![0.0; n])
    }

    /// Bids spread uniformly over the valuation support of each row, row `i`
    /// summing to `budgets[i]`.
    pub fn uniform(economy: &Economy, budgets: &[f64]) -> Result<Self> {
        let n = economy.n();
        if budgets.len() != n {
            return Err(Error::Shape(format!(
                "budgets have {} entries, expected {n}",
                budgets.len()
            )));
        }
        let mut bids = Matrix::zeros(n);
        for i in 0..n {
            let support = economy
                .valuations()
                .row(i)
                .iter()
                .filter(|&&v| v > 0.0)
                .count();
            for j in 0..n {
                if economy.valuation(i, j) > 0.0 {
                    bids[(i, j)] = budgets[i] / support as f64;
                }
            }
        }
        Self::without_bank(bids)
    }

    /// Uniform bids with equal budgets summing to one.
    pub fn uniform_normalized(economy: &Economy) -> Result<Self> {
        let n = economy.n();
        Self::uniform(economy, &vec![1.0 / n as f64; n])
    }

    /// Puts `(1 - alpha_i) / alpha_i * B_i` in each player's bank, the balance
    /// a lazy player carries when its spending budget is the `alpha_i` share
    /// of its money.
    pub fn with_matching_bank(mut self, alpha: &[f64]) -> Self {
        self.bank = self
            .budget
            .iter()
            .zip(alpha)
            .map(|(b, a)| (1.0 - a) * b / a)
            .collect();
        self
    }

    pub fn n(&self) -> usize {
        self.bids.n()
    }

    /// Spending budgets plus bank balances.
    pub fn total_money(&self) -> f64 {
        self.budget.iter().sum::<f64>() + self.bank.iter().sum::<f64>()
    }

    /// Checks the state against an economy: shapes, budget consistency and
    /// that bids only go to goods the bidder values.
    pub fn check(&self, economy: &Economy) -> Result<()> {
        let n = economy.n();
        if self.n() != n || self.budget.len() != n || self.bank.len() != n {
            return Err(Error::Shape(format!(
                "state is sized for {} players, economy has {n}",
                self.n()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let b = self.bids[(i, j)];
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::InvalidState(format!(
                        "bid b[{},{}] = {b} is not a finite non-negative amount",
                        i + 1,
                        j + 1
                    )));
                }
                if b > 0.0 && economy.valuation(i, j) <= 0.0 {
                    return Err(Error::InvalidState(format!(
                        "player {} bids on good {} which it does not value",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let row: f64 = self.bids.row(i).iter().sum();
            let tol = 1e-9 * self.budget[i].abs().max(1.0);
            if (row - self.budget[i]).abs() > tol {
                return Err(Error::InvalidState(format!(
                    "bids of player {} sum to {row}, budget is {}",
                    i + 1,
                    self.budget[i]
                )));
            }
        }
        Ok(())
    }
}

/// Rescales bids, budgets and bank balances by one common factor so that the
/// total money is one.
pub fn normalize_money(state: &MarketState) -> Result<MarketState> {
    let total = state.total_money();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateMoney(total));
    }
    let mut out = state.clone();
    if total == 1.0 {
        return Ok(out);
    }
    let factor = 1.0 / total;
    out.bids.scale(factor);
    out.budget.iter_mut().for_each(|v| *v *= factor);
    out.bank.iter_mut().for_each(|v| *v *= factor);
    Ok(out)
}

macro_rules! vector_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

vector_newtype!(
    /// `p[j]`: total money bid on good `j`.
    PriceVector
);
vector_newtype!(
    /// `u[i] = sum_j a[i][j] * x[i][j]`.
    UtilityVector
);

/// `x[(i, j)]`: fraction of good `j` received by player `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Matrix);

impl Deref for Allocation {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Per-step quantities derived from a bid matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub allocation: Allocation,
    pub prices: PriceVector,
    pub utilities: UtilityVector,
}

/// A claimed market equilibrium: allocation, prices normalized to sum to one,
/// the utilities they induce and the matching bids `b[i][j] = p[j] x[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub p_star: PriceVector,
    pub x_star: Allocation,
    pub u_star: UtilityVector,
    pub b_star: Matrix,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualReport>,
}

impl EquilibriumCertificate {
    /// Assembles a certificate from an allocation and prices; utilities and
    /// bids are derived.
    pub fn from_parts(economy: &Economy, x: Allocation, p: PriceVector, tol: f64) -> Result<Self> {
        let n = economy.n();
        if x.n() != n || p.len() != n {
            return Err(Error::Shape(format!(
                "certificate is sized for {} goods, economy has {n}",
                p.len()
            )));
        }
        let u_star = crate::dynamics::utilities(economy, &x);
        let b_star = Matrix::from_fn(n, |i, j| p[j] * x[(i, j)]);
        Ok(Self {
            p_star: p,
            x_star: x,
            u_star,
            b_star,
            tol,
            residuals: None,
        })
    }

    pub fn n(&self) -> usize {
        self.p_star.len()
    }

    /// Same equilibrium with prices and bids multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.p_star.0.iter_mut().for_each(|p| *p *= factor);
        out.b_star.scale(factor);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
