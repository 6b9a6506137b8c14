use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-hermitian input: {0}")]
    NonHermitian(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("state is rank deficient (min eigenvalue {min_eig:e}); regularize it first")]
    Singular { min_eig: f64 },
    #[error("quadrature did not converge: relative shift {shift:e} exceeds {tol:e}")]
    Quadrature { shift: f64, tol: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
