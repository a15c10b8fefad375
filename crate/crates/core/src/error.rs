use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("shape mismatch: expected {expected} points, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("condensate collapsed to zero norm")]
    ZeroNorm,

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("target particle number {target} is below the total depletion {depletion}")]
    BelowDepletion { target: f64, depletion: f64 },

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error("dynamically unstable mode: squared energy {0:.3e} is negative")]
    UnstableMode(f64),

    #[error("condensate is not a null vector of the fluctuation operator (residual {0:.3e})")]
    SingularZeroMode(f64),

    #[error("mode set has no free-mode projections")]
    MissingProjections,

    #[error("mode set is not homogeneous")]
    NotHomogeneous,

    #[error("correlation matrix has the wrong ordering: expected {expected}")]
    WrongOrdering { expected: &'static str },

    #[error("square-root factorization failed: {0}")]
    Factorization(String),

    #[error("representation mismatch: {0}")]
    RepresentationMismatch(String),

    #[error("non-finite field value in trajectory {0}")]
    BlowUp(usize),

    #[error("{escaped} of {total} trajectories escaped (threshold {threshold})")]
    EscapeThreshold {
        escaped: usize,
        total: usize,
        threshold: f64,
    },

    #[error("mean density is zero; g2 is undefined")]
    ZeroDensity,

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
