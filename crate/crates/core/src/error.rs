//! Error taxonomy for the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched or infeasible configuration (sizes, budgets, parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// An adversary emitted an action outside the locally consistent model.
    #[error("strategy violation at round {round}, {sender} -> {receiver}: {reason}")]
    StrategyViolation {
        round: usize,
        sender: crate::trace::PartyId,
        receiver: crate::trace::PartyId,
        reason: String,
    },

    /// Malformed action construction (e.g. dangling inbox reference).
    #[error("action construction error: {0}")]
    Construction(String),

    /// A set-family predicate failed to evaluate.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Requested bound outside the theorem's parameter range.
    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
