use thiserror::Error;

/// Errors raised by the geometry, estimation and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction is not a unit vector (norm {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("direction does not match any grid direction")]
    OffGrid,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid convex body: {0}")]
    InvalidBody(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("support vector is outside the support cone (max violation {violation:e})")]
    NotInCone { violation: f64 },

    #[error("numerically degenerate vertex: adjacent constraint gap {gap:e}")]
    DegenerateVertex { gap: f64 },

    #[error("cone projection did not converge after {iterations} sweeps (residual {residual:e})")]
    ProjectionDidNotConverge { iterations: usize, residual: f64 },

    #[error("covariance matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("propensity model: {0}")]
    Propensity(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Numerical / statistical failures, as opposed to malformed input geometry.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ProjectionDidNotConverge { .. }
                | Error::Singular { .. }
                | Error::Propensity(_)
                | Error::InvalidWeights(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
