use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid coefficient field: {0}")]
    InvalidField(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("fine mesh does not resolve the coefficient grid: {0}")]
    Resolution(String),

    #[error("cholesky factorization failed: {context}")]
    Factorization { context: String },

    #[error("linear solve broke down ({context}): relative residual {residual:e}")]
    SolverBreakdown { context: String, residual: f64 },

    #[error("eigen/singular value decomposition failed: {0}")]
    Decomposition(String),

    #[error("patch centered at coarse cell {center} produced a non-finite basis norm")]
    NonFiniteBasis { center: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
