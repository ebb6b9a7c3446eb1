//! Bid update rules and the trajectory runner.
//!
//! All three rules share the trading-post exchange: good `j` goes to the
//! bidders on it in proportion to their bids and its price is the total bid.

use serde::{Deserialize, Serialize};

use crate::econ::{
    Allocation, Economy, EquilibriumCertificate, Exchange, MarketState, PriceVector, UtilityVector,
};
use crate::error::{Error, Result};
use crate::lyapunov::{LyapunovRecord, LyapunovTracker};
use crate::matrix::Matrix;

/// Bids below this are flushed to zero after every update.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Splits every good among its bidders and sums the bids into prices.
pub fn allocate(bids: &Matrix) -> (Allocation, PriceVector) {
    let n = bids.n();
    let prices = bids.col_sums();
    let x = Matrix::from_fn(n, |i, j| {
        let b = bids[(i, j)];
        if b > 0.0 {
            b / prices[j]
        } else {
            0.0
        }
    });
    (Allocation(x), PriceVector(prices))
}

pub fn utilities(economy: &Economy, x: &Allocation) -> UtilityVector {
    let a = economy.valuations();
    UtilityVector(
        a.rows()
            .zip(x.rows())
            .map(|(ai, xi)| ai.iter().zip(xi).map(|(a, x)| a * x).sum())
            .collect(),
    )
}

pub fn exchange(economy: &Economy, bids: &Matrix) -> Exchange {
    let (allocation, prices) = allocate(bids);
    let utilities = utilities(economy, &allocation);
    Exchange {
        allocation,
        prices,
        utilities,
    }
}

/// Rescales every player's received value shares to its new budget.
/// Returns the new bids and whether any bid was flushed to zero.
fn reweight_bids(economy: &Economy, ex: &Exchange, new_budget: &[f64]) -> Result<(Matrix, bool)> {
    let n = economy.n();
    let mut bids = Matrix::zeros(n);
    let mut clamped = false;
    for i in 0..n {
        let u = ex.utilities[i];
        let budget = new_budget[i];
        if u <= 0.0 {
            if budget > 0.0 {
                return Err(Error::DegenerateUtility { player: i, budget });
            }
            continue;
        }
        let row = bids.row_mut(i);
        for (j, b) in row.iter_mut().enumerate() {
            let v = economy.valuation(i, j) * ex.allocation[(i, j)] / u * budget;
            if v > 0.0 && v < UNDERFLOW_FLOOR {
                clamped = true;
            } else {
                *b = v;
            }
        }
    }
    Ok((bids, clamped))
}

pub(crate) fn pr_step_with(
    economy: &Economy,
    s: &MarketState,
    ex: &Exchange,
) -> Result<(MarketState, bool)> {
    let budget = ex.prices.0.clone();
    let (bids, clamped) = reweight_bids(economy, ex, &budget)?;
    Ok((
        MarketState {
            t: s.t + 1,
            bids,
            budget,
            bank: s.bank.clone(),
        },
        clamped,
    ))
}

pub(crate) fn lazy_pr_step_with(
    economy: &Economy,
    s: &MarketState,
    ex: &Exchange,
) -> Result<(MarketState, bool)> {
    let alpha = economy.alpha();
    let n = economy.n();
    let mut budget = Vec::with_capacity(n);
    let mut bank = Vec::with_capacity(n);
    for i in 0..n {
        // Sales revenue plus savings, split again into spending and savings.
        let money = ex.prices[i] + s.bank[i];
        budget.push(alpha[i] * money);
        bank.push((1.0 - alpha[i]) * money);
    }
    let (bids, clamped) = reweight_bids(economy, ex, &budget)?;
    Ok((
        MarketState {
            t: s.t + 1,
            bids,
            budget,
            bank,
        },
        clamped,
    ))
}

/// One round of proportional response: every player's new budget is the
/// revenue of its good and is spent in proportion to the utility each good
/// contributed.
pub fn pr_step(economy: &Economy, s: &MarketState) -> Result<MarketState> {
    let ex = exchange(economy, &s.bids);
    pr_step_with(economy, s, &ex).map(|(s, _)| s)
}

/// One round of lazy proportional response.
///
/// Player `i` pools its revenue with its bank balance, spends the `alpha_i`
/// share next round and banks the rest. When the bank holds
/// `(1 - alpha_i) / alpha_i * B_i(t)` this gives
/// `B_i(t+1) = alpha_i p_i(t) + (1 - alpha_i) B_i(t)`.
pub fn lazy_pr_step(economy: &Economy, s: &MarketState) -> Result<MarketState> {
    let ex = exchange(economy, &s.bids);
    lazy_pr_step_with(economy, s, &ex).map(|(s, _)| s)
}

/// Moneyless tit-for-tat state. `y[(j, i)]` is the fraction of good `j`
/// given to player `i`; note the good-first index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TftState {
    pub t: usize,
    pub y: Matrix,
}

impl TftState {
    pub fn new(y: Matrix) -> Result<Self> {
        for (j, row) in y.rows().enumerate() {
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidState(format!(
                    "fractions of good {} must be finite and non-negative",
                    j + 1
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidState(format!(
                    "fractions of good {} sum to {total}, expected 1",
                    j + 1
                )));
            }
        }
        Ok(Self { t: 0, y })
    }

    /// The fractions a bid matrix induces: `y[(j, i)] = b[(i, j)] / p[j]`.
    pub fn from_bids(bids: &Matrix) -> Result<Self> {
        let (x, _) = allocate(bids);
        Self::new(x.transpose())
    }

    /// Player-first view, `x[(i, j)] = y[(j, i)]`.
    pub fn allocation(&self) -> Allocation {
        Allocation(self.y.transpose())
    }

    pub fn check(&self, economy: &Economy) -> Result<()> {
        if self.y.n() != economy.n() {
            return Err(Error::Shape(format!(
                "fraction matrix is {}x{}, economy has {} players",
                self.y.n(),
                self.y.n(),
                economy.n()
            )));
        }
        Ok(())
    }
}

fn tft_utilities(economy: &Economy, y: &Matrix) -> UtilityVector {
    let n = economy.n();
    UtilityVector(
        (0..n)
            .map(|i| (0..n).map(|k| y[(k, i)] * economy.valuation(i, k)).sum())
            .collect(),
    )
}

/// `y[(i, j)](t+1) = y[(j, i)](t) * a[i][j] / u_i(t)`: each player hands out
/// its own good in proportion to what every partner's good was worth to it.
pub fn tft_step(economy: &Economy, s: &TftState) -> Result<TftState> {
    let u = tft_utilities(economy, &s.y);
    tft_step_with(economy, s, &u)
}

fn tft_step_with(economy: &Economy, s: &TftState, u: &UtilityVector) -> Result<TftState> {
    let n = economy.n();
    let mut y = Matrix::zeros(n);
    for i in 0..n {
        if u[i] <= 0.0 {
            return Err(Error::DegenerateUtility {
                player: i,
                budget: 1.0,
            });
        }
        for j in 0..n {
            let v = s.y[(j, i)] * economy.valuation(i, j) / u[i];
            if v >= UNDERFLOW_FLOOR {
                y[(i, j)] = v;
            }
        }
    }
    Ok(TftState { t: s.t + 1, y })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Proportional response.
    Pr,
    /// Lazy proportional response using the economy's savings fractions.
    Lazy,
    /// Tit-for-tat.
    Tft,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pr" => Ok(Mode::Pr),
            "lazy" => Ok(Mode::Lazy),
            "tft" => Ok(Mode::Tft),
            other => Err(Error::InvalidSpec(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Pr => "pr",
            Mode::Lazy => "lazy",
            Mode::Tft => "tft",
        })
    }
}

/// Which steps a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordPolicy {
    All,
    /// Steps whose index is a multiple of `k`.
    Every(usize),
    /// Only the final state.
    Last,
    /// The trailing `k` states.
    Tail(usize),
}

impl RecordPolicy {
    /// Spacing, in steps, between consecutive records.
    pub fn stride(&self) -> usize {
        match self {
            RecordPolicy::Every(k) => *k,
            _ => 1,
        }
    }

    /// Whether the record at step `t` is kept; `is_last` marks the final
    /// state. `Tail` keeps everything here and trims separately.
    pub fn keeps(&self, t: usize, is_last: bool) -> bool {
        match self {
            RecordPolicy::All | RecordPolicy::Tail(_) => true,
            RecordPolicy::Every(k) => t.is_multiple_of(*k),
            RecordPolicy::Last => is_last,
        }
    }
}

impl std::str::FromStr for RecordPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_k = |k: &str| -> Result<usize> {
            match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(k),
                _ => Err(Error::InvalidSpec(format!(
                    "record interval must be a positive integer, got `{k}`"
                ))),
            }
        };
        match s {
            "all" => Ok(RecordPolicy::All),
            "last" => Ok(RecordPolicy::Last),
            _ => {
                if let Some(k) = s.strip_prefix("every:") {
                    Ok(RecordPolicy::Every(parse_k(k)?))
                } else if let Some(k) = s.strip_prefix("tail:") {
                    Ok(RecordPolicy::Tail(parse_k(k)?))
                } else {
                    Err(Error::InvalidSpec(format!("unknown record policy `{s}`")))
                }
            }
        }
    }
}

/// Dynamic state of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snapshot {
    Market(MarketState),
    Tft(TftState),
}

impl Snapshot {
    pub fn t(&self) -> usize {
        match self {
            Snapshot::Market(s) => s.t,
            Snapshot::Tft(s) => s.t,
        }
    }

    pub fn as_market(&self) -> Option<&MarketState> {
        match self {
            Snapshot::Market(s) => Some(s),
            Snapshot::Tft(_) => None,
        }
    }

    pub fn as_tft(&self) -> Option<&TftState> {
        match self {
            Snapshot::Tft(s) => Some(s),
            Snapshot::Market(_) => None,
        }
    }
}

/// One recorded time step with everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: Snapshot,
    /// Empty under tit-for-tat, which has no money.
    pub prices: PriceVector,
    pub allocation: Allocation,
    pub utilities: UtilityVector,
    pub lyapunov: Option<LyapunovRecord>,
}

impl StepRecord {
    /// Quantity whose periodicity defines a limit cycle: prices for the
    /// money dynamics, the flattened allocation for tit-for-tat.
    pub fn cycle_signal(&self) -> &[f64] {
        match &self.state {
            Snapshot::Market(_) => &self.prices,
            Snapshot::Tft(_) => self.allocation.as_slice(),
        }
    }

    pub fn bids(&self) -> Option<&Matrix> {
        self.state.as_market().map(|s| &s.bids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub steps: usize,
    pub stride: usize,
    pub records: Vec<StepRecord>,
    /// Set when some bid underflowed and was flushed to zero.
    pub clamped: bool,
}

impl Trajectory {
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Step-by-step driver for one trajectory.
///
/// Every step computes the exchange of the current state once; the same
/// quantities feed the update, the returned record and the Lyapunov
/// instrumentation.
pub struct Simulation<'a> {
    economy: &'a Economy,
    mode: Mode,
    state: Snapshot,
    tracker: Option<LyapunovTracker>,
    current: Option<StepRecord>,
    clamped: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(economy: &'a Economy, mode: Mode, state: Snapshot) -> Result<Self> {
        match (&state, mode) {
            (Snapshot::Market(s), Mode::Pr | Mode::Lazy) => s.check(economy)?,
            (Snapshot::Tft(s), Mode::Tft) => s.check(economy)?,
            _ => {
                return Err(Error::InvalidState(format!(
                    "initial state does not match mode `{mode}`"
                )))
            }
        }
        Ok(Self {
            economy,
            mode,
            state,
            tracker: None,
            current: None,
            clamped: false,
        })
    }

    pub fn market(economy: &'a Economy, mode: Mode, state: MarketState) -> Result<Self> {
        Self::new(economy, mode, Snapshot::Market(state))
    }

    /// Attaches Lyapunov instrumentation. The certificate is rescaled so its
    /// prices sum to the money the players spend per round.
    pub fn with_lyapunov(mut self, certificate: &EquilibriumCertificate) -> Result<Self> {
        let Snapshot::Market(s) = &self.state else {
            return Err(Error::NotApplicable(
                "Lyapunov instrumentation needs a money dynamic".into(),
            ));
        };
        let alpha = match self.mode {
            Mode::Lazy => self.economy.alpha().to_vec(),
            _ => vec![1.0; self.economy.n()],
        };
        let spend: f64 = match self.mode {
            Mode::Lazy => s
                .budget
                .iter()
                .zip(&s.bank)
                .zip(&alpha)
                .map(|((b, k), a)| a * (b + k))
                .sum(),
            _ => s.budget.iter().sum(),
        };
        let total: f64 = certificate.p_star.iter().sum();
        if !(spend > 0.0 && total > 0.0) {
            return Err(Error::DegenerateMoney(spend));
        }
        let tracker = LyapunovTracker::new(certificate.scaled(spend / total), alpha)?;
        self.tracker = Some(tracker);
        self.current = None;
        Ok(self)
    }

    pub fn state(&self) -> &Snapshot {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.state.t()
    }

    pub fn clamped(&self) -> bool {
        self.clamped
    }

    fn observe(&self) -> Result<StepRecord> {
        let t = self.state.t();
        match &self.state {
            Snapshot::Market(s) => {
                let ex = exchange(self.economy, &s.bids);
                let lyapunov = match &self.tracker {
                    Some(tr) => Some(tr.evaluate(s, &ex)?),
                    None => None,
                };
                Ok(StepRecord {
                    t,
                    state: self.state.clone(),
                    prices: ex.prices,
                    allocation: ex.allocation,
                    utilities: ex.utilities,
                    lyapunov,
                })
            }
            Snapshot::Tft(s) => Ok(StepRecord {
                t,
                state: self.state.clone(),
                prices: PriceVector(Vec::new()),
                allocation: s.allocation(),
                utilities: tft_utilities(self.economy, &s.y),
                lyapunov: None,
            }),
        }
    }

    /// Record of the current state.
    pub fn current(&mut self) -> Result<&StepRecord> {
        if self.current.is_none() {
            self.current = Some(self.observe()?);
        }
        Ok(self.current.as_ref().expect("just filled"))
    }

    /// Advances one round and returns the record of the state it left, with
    /// its Lyapunov step-identity residual filled in.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.t();
        self.step_inner().map_err(|e| Error::Step {
            t,
            source: Box::new(e),
        })
    }

    fn step_inner(&mut self) -> Result<StepRecord> {
        let mut rec = match self.current.take() {
            Some(r) => r,
            None => self.observe()?,
        };
        let next = match &self.state {
            Snapshot::Market(s) => {
                let ex = Exchange {
                    allocation: rec.allocation.clone(),
                    prices: rec.prices.clone(),
                    utilities: rec.utilities.clone(),
                };
                let (next, clamped) = match self.mode {
                    Mode::Pr => pr_step_with(self.economy, s, &ex)?,
                    _ => lazy_pr_step_with(self.economy, s, &ex)?,
                };
                self.clamped |= clamped;
                Snapshot::Market(next)
            }
            Snapshot::Tft(s) => Snapshot::Tft(tft_step_with(self.economy, s, &rec.utilities)?),
        };
        self.state = next;
        let next_rec = self.observe()?;
        if let (Some(cur), Some(nxt)) = (rec.lyapunov.as_mut(), next_rec.lyapunov.as_ref()) {
            cur.identity_residual = Some((nxt.log_f - cur.log_f - cur.log_g - cur.log_h).abs());
        }
        self.current = Some(next_rec);
        Ok(rec)
    }
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions<'c> {
    pub mode: Mode,
    pub steps: usize,
    pub record: RecordPolicy,
    pub certificate: Option<&'c EquilibriumCertificate>,
}

impl<'c> RunOptions<'c> {
    pub fn new(mode: Mode, steps: usize) -> Self {
        Self {
            mode,
            steps,
            record: RecordPolicy::All,
            certificate: None,
        }
    }

    pub fn record(mut self, policy: RecordPolicy) -> Self {
        self.record = policy;
        self
    }

    pub fn lyapunov(mut self, certificate: &'c EquilibriumCertificate) -> Self {
        self.certificate = Some(certificate);
        self
    }
}

/// Runs `opts.steps` rounds from `s0`, keeping the records `opts.record`
/// selects. Errors carry the index of the failing step.
pub fn run(economy: &Economy, s0: Snapshot, opts: &RunOptions<'_>) -> Result<Trajectory> {
    let mut sim = Simulation::new(economy, opts.mode, s0)?;
    if let Some(c) = opts.certificate {
        sim = sim.with_lyapunov(c)?;
    }
    let mut records = std::collections::VecDeque::new();
    let keep = |t: usize, last: bool| opts.record.keeps(t, last);
    for _ in 0..opts.steps {
        let rec = sim.step()?;
        if keep(rec.t, false) {
            records.push_back(rec);
            if let RecordPolicy::Tail(k) = opts.record {
                while records.len() > k {
                    records.pop_front();
                }
            }
        }
    }
    let last = sim.current()?.clone();
    if keep(last.t, true) {
        records.push_back(last);
        if let RecordPolicy::Tail(k) = opts.record {
            while records.len() > k {
                records.pop_front();
            }
        }
    }
    Ok(Trajectory {
        mode: opts.mode,
        steps: opts.steps,
        stride: opts.record.stride(),
        records: records.into(),
        clamped: sim.clamped(),
    })
}
