//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by chip construction, simulation, training and compilation.
#[derive(Debug, Error)]
pub enum Error {
    /// A chip specification violates a structural constraint.
    #[error("invalid chip spec: {0}")]
    InvalidSpec(String),

    /// A circuit violates a structural constraint (self-gate, bad label).
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    /// A chip state violates the invariants of its spec.
    #[error("invalid chip state: {0}")]
    InvalidState(String),

    /// An action outside the legal-action mask was applied.
    #[error("action {action} is masked in the current state")]
    MaskedAction { action: usize },

    /// A gate was executed before its predecessors.
    #[error("gate {gate} is not in the front layer")]
    DependencyViolation { gate: usize },

    /// A circuit needs more qubits than the chip supports.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Non-finite values surfaced in numeric code.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A compile budget ran out before any valid schedule was found.
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    /// A checkpoint file is malformed or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Text-format parse failure (circuit files, chip files).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
