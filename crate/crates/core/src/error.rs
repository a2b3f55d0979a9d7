use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("element is not geometric: max |Sym(level2) - level1^2/2| = {residual:.3e}")]
    NotGeometric { residual: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time {0} is not a grid point")]
    NotOnGrid(f64),

    #[error("variation exponent must be >= 1, got {0}")]
    ExponentRange(f64),

    #[error("exact 2D variation is limited to {max} grid points, got {found}; use the diagonal-refinement estimator")]
    TooManyPoints { max: usize, found: usize },

    #[error("invalid kernel parameter: {0}")]
    InvalidKernel(String),

    #[error("covariance matrix is not positive semidefinite: most negative eigenvalue {min_eigenvalue:.3e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("degenerate model: every covariance eigenvalue is below the cutoff")]
    DegenerateModel,

    #[error("times must be strictly increasing and in (0, T]")]
    UnorderedTimes,

    #[error("solution exploded at t = {time}")]
    Explosion { time: f64 },

    #[error("flow was solved without its Jacobian")]
    MissingJacobian,

    #[error("invalid vector field: {0}")]
    InvalidVectorField(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("condition check failed: {0}")]
    Condition(String),

    #[error("{failed} of {total} samples failed")]
    Aborted { failed: usize, total: usize },

    #[error("density estimation: {0}")]
    Density(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
