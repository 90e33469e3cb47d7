use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JflowError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("field has a non-finite value at point {location}")]
    NonFiniteField { location: usize },

    #[error("density must be positive, found {value:e} at point {location}")]
    NonPositiveDensity { value: f64, location: usize },

    /// The potential left the space of Kähler potentials.
    #[error("metric is not positive: min eigenvalue {min_eig:e} at point {location}")]
    NotKahler { min_eig: f64, location: usize },

    #[error("unsupported complex dimension {0}; only n = 1 and n = 2 are implemented")]
    UnsupportedDimension(usize),

    #[error("chi is not constant and no potential was supplied")]
    MissingPotential,

    #[error("straight segment leaves the Kähler cone at s = {s}: min eigenvalue {min_eig:e}")]
    LeftKahlerCone { s: f64, min_eig: f64 },

    #[error("time step rejected {rejections} times at t = {t} (last dt = {dt:e})")]
    StepFailure { t: f64, dt: f64, rejections: usize },

    #[error("geodesic solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NoConvergence { iterations: usize, best_residual: f64 },

    #[error("invalid Kähler structure: {0}")]
    InvalidStructure(String),

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("invalid path: {0}")]
    InvalidPath(String),
}

pub type Result<T> = std::result::Result<T, JflowError>;
