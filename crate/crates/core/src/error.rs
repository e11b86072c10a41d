use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid of size {grid} cannot resolve truncation order {order} (need at least {needed})")]
    Aliasing { grid: usize, order: usize, needed: usize },

    #[error("grid size {0} is not a power of two")]
    GridNotPowerOfTwo(usize),

    #[error("coefficient vector is not conjugate-symmetric (defect {0:.3e})")]
    NotReal(f64),

    #[error("truncation order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("invalid noise width {0}: must be finite and strictly positive")]
    InvalidNoise(f64),

    #[error("perturbation parameter {delta} outside admissible range |delta| <= {delta_max}")]
    Inadmissible { delta: f64, delta_max: f64 },

    #[error("map is not expanding: min |T'| = {min_deriv:.6} (alpha = {alpha:.6})")]
    NotExpanding { min_deriv: f64, alpha: f64 },

    #[error("perturbation family fails to be an orientation-preserving diffeomorphism at delta = {delta}")]
    NotDiffeomorphism { delta: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input must have zero mean (got mean {0:.3e})")]
    NonzeroMean(f64),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("stationary density is negative somewhere (grid minimum {0:.3e})")]
    NegativeDensity(f64),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
