use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data or configuration is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The result cannot be represented as a finite `f64`.
    #[error("overflow: {0}")]
    Overflow(String),

    /// A finite-difference or function evaluation produced a non-finite value.
    #[error("non-finite evaluation at coordinate {coordinate}: {detail}")]
    NonFiniteEvaluation { coordinate: usize, detail: String },

    #[error("matrix not positive definite ({context}); offending site pair ({site_a}, {site_b})")]
    NotPositiveDefinite {
        context: String,
        site_a: usize,
        site_b: usize,
    },

    #[error("optimisation did not converge: {0}")]
    Convergence(String),

    /// Hessian inversion failed; used by CLIC to skip a model.
    #[error("singular Hessian: {0}")]
    SingularHessian(String),

    /// A summary vector contained non-finite components.
    #[error("invalid summary statistics: {}", .0.join(", "))]
    InvalidSummary(Vec<String>),

    /// Numerical failure that aborts an analysis (MCLE, score or summary failures).
    #[error("numerical abort: {0}")]
    NumericalAbort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
