//! Proportional response dynamics for linear exchange economies.
//!
//! Every player owns one unit of an eponymous divisible good and bids money on
//! the goods of others through a trading post: each good is split in
//! proportion to the bids placed on it, and its price is the sum of those
//! bids. This crate simulates three bid-update rules on top of that mechanism
//! and provides the machinery to study where they go:
//!
//! - [`dynamics`]: proportional response, lazy proportional response (players
//!   bank part of their money each round) and the moneyless tit-for-tat rule,
//!   plus a trajectory runner.
//! - [`equilibrium`]: a fixed-point oracle that produces equilibrium
//!   certificates, and checks for them.
//! - [`lyapunov`]: the KL-divergence potential and its per-step factors.
//! - [`analysis`]: limit-cycle detection, equivalence classes of the limit
//!   allocation, and convergence metrics.
//! - [`instance`]: the JSON instance format, generators and named presets.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod econ;
pub mod equilibrium;
pub mod error;
pub mod instance;
pub mod lyapunov;
pub mod matrix;
mod union_find;

pub use dynamics::{Mode, RecordPolicy, Snapshot, StepRecord, Trajectory};
pub use econ::{
    Allocation, Economy, EquilibriumCertificate, Exchange, MarketState, PriceVector, UtilityVector,
    ValidationReport,
};
pub use equilibrium::ResidualReport;
pub use error::{Error, Result};
pub use matrix::Matrix;
