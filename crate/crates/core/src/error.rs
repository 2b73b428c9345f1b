use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the solvers, constructors and parsers.
///
/// Numeric diagnostics are carried as `f64` regardless of the scalar type in
/// use so the error type stays non-generic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "value iteration did not converge in {iterations} iterations (last residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular linear system (condition estimate {condition:e}, ridge {ridge:e})")]
    Singular { condition: f64, ridge: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("node {0} has no neighbours; degree-normalised matrices are undefined")]
    IsolatedNode(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
