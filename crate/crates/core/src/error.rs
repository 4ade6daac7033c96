use thiserror::Error;

/// Failures raised by the geometric and numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("energy {0} outside [0, 12]")]
    EnergyOutOfRange(f64),
    #[error("free coordinates are not over the Fermi surface (solved cosine {0})")]
    OutOfRange(f64),
    #[error("graph chart degenerates: solved cosine {0} is at +-1")]
    DegenerateBranch(f64),
    #[error("point is a critical point of the symbol")]
    AtCriticalPoint,
    #[error("point lies outside the chart")]
    OutsidePatch,
    #[error("unsupported derivative order {0}")]
    InvalidOrder(usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("eigenvalues collide (gap {0:e}); rotation undefined")]
    EigenvalueCollision(f64),
    #[error("no normal-form case matches: {0}")]
    UnclassifiedPoint(String),
    #[error("Taylor support is empty")]
    EmptySupport,
    #[error("quadrature budget exceeded ({needed} nodes needed, cap {cap})")]
    BudgetExceeded { needed: usize, cap: usize },
    #[error("spectral parameter {0} lies on the spectrum [0, 12]")]
    OnSpectrum(f64),
    #[error("kernel did not converge (last relative change {change:e} at grid {grid_n})")]
    NoConvergence { grid_n: usize, change: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
