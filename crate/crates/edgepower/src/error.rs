use crate::matrix::ValidationReport;

/// Errors produced by the modeling and simulation layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose shapes disagree (matrix vs. profile vs. distribution).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A transition matrix that fails the stochasticity checks.
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(ValidationReport),

    /// The linear system for the stationary distribution is rank-deficient,
    /// which happens when the chain is reducible or otherwise degenerate.
    #[error("stationary distribution is not unique (reducible or degenerate chain)")]
    NonUniqueStationary,

    /// The solver produced a vector that does not satisfy pi * P = pi to
    /// within the documented tolerance.
    #[error("steady-state residual {residual:e} exceeds the 1e-10 tolerance")]
    ResidualTooLarge { residual: f64 },

    /// A scalar argument outside its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A state index that does not exist in an n-state model.
    #[error("unknown state index {index} for a {n}-state model")]
    UnknownState { index: usize, n: usize },

    /// A workload file record that is not a nonnegative integer.
    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    /// A workload file record that parsed as a negative integer.
    #[error("trace line {line}: negative demand {value}")]
    NegativeDemand { line: usize, value: i64 },

    /// A power-state transition outside the management graph.
    #[error("transition {from} -> {to} is not a legal management action")]
    IllegalAction { from: usize, to: usize },

    /// The oracle forecaster was stepped without the next true demand,
    /// e.g. at the end of a trace or inside a fleet where per-node demand
    /// is only known one tick at a time.
    #[error("the oracle forecaster needs the next true demand and none is available")]
    MissingTrueNext,

    /// A run that asks for more ticks than the workload trace provides.
    #[error("workload trace has {have} ticks but the run needs {need}")]
    TraceTooShort { have: usize, need: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
