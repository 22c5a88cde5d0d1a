//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The switching-angle solver exhausted its restart budget.
    #[error("solver failed to converge after {restarts} restarts (best residual {best_residual:.3e})")]
    SolverFailure { restarts: usize, best_residual: f64 },

    /// A commanded voltage exceeds what the dc link can synthesize.
    #[error("overmodulation: modulation index {m_a:.4} exceeds 1")]
    Overmodulation { m_a: f64 },

    /// A spectral analysis window does not span an integer number of periods.
    #[error("windowing error: {0}")]
    Window(String),

    /// A battery unit was driven below zero state of charge.
    #[error("cell depleted: unit {unit} soc would fall below 0")]
    CellDepleted { unit: usize },

    /// A scenario failed to reach its required operating condition.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Loss accounting produced an inconsistent decomposition.
    #[error("accounting error: {0}")]
    Accounting(String),

    /// Configuration file problem.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
