use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing parameter (grid sizes, α, quadrature order, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The MLS moment matrix could not be inverted at `point`.
    #[error(
        "insufficient nodal coverage at ({:.6}, {:.6}): {active} active nodes, condition estimate {condition:.3e}",
        point.x, point.y
    )]
    Coverage {
        point: Point,
        active: usize,
        condition: f64,
    },

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system: smallest pivot magnitude {min_pivot:.3e}")]
    Singular { min_pivot: f64 },

    #[error("newton iteration did not converge at load step {step}: {reason}")]
    NonConvergence {
        step: usize,
        reason: String,
        history: Vec<crate::solver::StepRecord>,
    },

    /// A condition that construction should have made impossible.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
