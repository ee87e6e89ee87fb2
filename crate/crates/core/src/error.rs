use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtlabError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("value outside the domain of the function: {0}")]
    Domain(String),
    #[error("not a *-algebra: {0}")]
    NotAnAlgebra(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("generator is unstable: eigenvalue {eigenvalue:.3e} has positive real part")]
    Instability { eigenvalue: f64 },
    #[error("detailed balance violated (residual {residual:.3e})")]
    DetailedBalance { residual: f64 },
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, AtlabError>;
