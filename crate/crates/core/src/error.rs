use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("estimation did not converge after {iterations} iterations (last objective {objective:.6e}, step {step:.3e})")]
    Estimation {
        iterations: usize,
        objective: f64,
        step: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
