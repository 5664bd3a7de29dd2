use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("gradient undefined at this point: {0}")]
    GradientUndefined(String),

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("matrix is not positive semidefinite ({context}): smallest eigenvalue {min_eigenvalue:e}")]
    NotPsd { context: String, min_eigenvalue: f64 },

    #[error("matrix is not positive definite ({context}): smallest eigenvalue {min_eigenvalue:e}")]
    NotPd { context: String, min_eigenvalue: f64 },

    #[error("matrix is not symmetric ({0})")]
    NotSymmetric(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("game is not symmetric: first violation at pair ({0}, {1})")]
    Asymmetric(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("composition rule {rule} refused: {reason}")]
    RuleViolated { rule: String, reason: String },

    #[error("no suitability certificate for {0}")]
    CertificateMissing(String),

    #[error("no feasible ratio in bracket [{lo}, {hi}]")]
    NoFeasibleRatio { lo: f64, hi: f64 },

    /// Iteration budget exhausted. `best` is the flattened final iterate.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("schema error: {0}")]
    Schema(String),
}
