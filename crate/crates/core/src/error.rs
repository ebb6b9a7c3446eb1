use thiserror::Error;

use crate::econ::ValidationReport;
use crate::equilibrium::NonConvergence;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid economy: {0}")]
    InvalidEconomy(ValidationReport),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate money: total money is {0}")]
    DegenerateMoney(f64),

    /// A player earned money but values nothing in its current bundle.
    #[error("degenerate state: player {} has zero utility but receives budget {budget}", .player + 1)]
    DegenerateUtility { player: usize, budget: f64 },

    #[error("step {t} failed: {source}")]
    Step {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infinite divergence at index {0}")]
    InfiniteDivergence(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed certificate: {0}")]
    MalformedCertificate(String),

    #[error("certificate rejected: {0}")]
    Unverified(String),

    #[error("equilibrium oracle did not converge after {} iterations", .0.iterations)]
    NonConvergence(Box<NonConvergence>),

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Strips `Step` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateMoney(_)
                | Error::DegenerateUtility { .. }
                | Error::InfiniteDivergence(_)
                | Error::Domain(_)
        )
    }
}
