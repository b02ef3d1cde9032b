use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{what} is not in the expected span (residual {residual:.3e})")]
    Domain { what: String, residual: f64 },
    #[error("map leaves the algebra (closure residual {0:.3e})")]
    ClosureViolation(f64),
    #[error("Gram matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e} at scale {scale:.3e})")]
    NotPsd { eigenvalue: f64, scale: f64 },
    #[error("operator does not preserve the null space (residual {0:.3e})")]
    Descent(f64),
    #[error("map is not well defined on its generators (residual {0:.3e})")]
    NotWellDefined(f64),
    #[error("index {index} exceeds the truncation level {level}")]
    Truncation { index: usize, level: usize },
    #[error("dimension {dim} of {what} exceeds the cap {cap}")]
    SizeCap { what: String, dim: usize, cap: usize },
    #[error("result leaves the algebra (residual {0:.3e})")]
    Consistency(f64),
    #[error("incompatible actions: {0}")]
    Incompatible(String),
    #[error("no bimodule isomorphism found: {0}")]
    NoIsomorphism(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
