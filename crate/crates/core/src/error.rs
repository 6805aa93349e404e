use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("rank deficient block: column {column} has M-norm {norm:.3e} after projection")]
    RankDeficient { column: usize, norm: f64 },

    #[error("degenerate eigenvalues at the Fermi level: lambda_N = {occupied:.12}, lambda_N+1 = {unoccupied:.12}")]
    FermiDegeneracy { occupied: f64, unoccupied: f64 },

    #[error("line search failed after {halvings} step halvings")]
    LineSearch { halvings: usize },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("negative density {value:.3e} at quadrature point {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
