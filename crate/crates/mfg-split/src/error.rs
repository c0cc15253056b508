use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfgError>;

/// Library-wide error type. CLI maps variants to exit codes.
#[derive(Debug, Error)]
pub enum MfgError {
    #[error("grids are incompatible: {left} vs {right} cells (length {left_len} vs {right_len})")]
    GridMismatch {
        left: usize,
        right: usize,
        left_len: f64,
        right_len: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dual norm order {0} unsupported (supported: 1, 2, 3)")]
    UnsupportedOrder(usize),

    #[error("diffusion coefficient is negative ({min_value:.3e} at x={at:.6}); problem is not parabolic")]
    NotElliptic { min_value: f64, at: f64 },

    #[error("time step {dt:.6e} violates the drift CFL bound; required dt <= {required:.6e} (max drift {max_drift:.3e})")]
    CflViolation {
        dt: f64,
        required: f64,
        max_drift: f64,
    },

    #[error("{solver} did not converge after {iterations} iterations (gap {gap:.3e} > tol {tol:.3e}); try a shorter horizon")]
    NotConverged {
        solver: String,
        iterations: usize,
        gap: f64,
        tol: f64,
    },

    #[error("functional '{functional}' does not provide {what}; supply it explicitly instead of relying on finite differences")]
    MissingDerivative { functional: String, what: String },

    #[error("invalid scenario at '{path}': {message}")]
    Schema { path: String, message: String },

    #[error("evaluation budget exceeded: {used} evaluations performed, budget {budget}")]
    BudgetExceeded { used: u64, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
