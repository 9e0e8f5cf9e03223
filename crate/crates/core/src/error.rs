//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates its contract.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A configuration value is inconsistent with the data it is applied to.
    #[error("configuration error: {0}")]
    Config(String),

    /// The data violate a precondition (shape, validity, grid structure).
    #[error("data error: {0}")]
    Data(String),

    /// A design matrix is rank deficient beyond ridge rescue.
    #[error("singular design: column(s) [{}] not identifiable", columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    /// The missingness pattern is not monotone in the requested column
    /// order; the chained-equations driver handles such patterns.
    #[error("missingness in column '{column}' is not monotone; use chained-equations imputation")]
    NonMonotone { column: String },

    /// An iterative fit exhausted its iteration budget.
    #[error("fit did not converge after {iterations} iterations (best loglik {best_loglik})")]
    NonConvergence {
        iterations: usize,
        best_loglik: f64,
        loglik_trace: Vec<f64>,
    },
}
