use thiserror::Error;

/// Errors raised by graph construction, factorizations, samplers and
/// experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A symmetric positive-definite factorization met a pivot below the
    /// relative floor. `vertex` is the graph vertex of the offending row.
    #[error("degenerate input at vertex {vertex}: pivot {pivot:e} below floor {floor:e}")]
    Degenerate { vertex: usize, pivot: f64, floor: f64 },

    /// The sequential sampler drew a pivot below tolerance.
    #[error("degenerate sample at vertex {vertex}: pivot {pivot:e}")]
    DegenerateSample { vertex: usize, pivot: f64 },

    #[error("path-sum oracle inapplicable: transfer spectral radius bound {0} >= 1")]
    OracleInapplicable(f64),

    #[error("identity violated for {instance}: relative error {relative_error:e} > {tolerance:e}")]
    IdentityViolation {
        instance: String,
        relative_error: f64,
        tolerance: f64,
    },

    #[error("quadrature did not converge on [{lo}, {hi}] (error estimate {estimate:e})")]
    Quadrature { lo: f64, hi: f64, estimate: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{aborted} of {total} replicates aborted (limit {limit})")]
    AbortBudget {
        aborted: usize,
        total: usize,
        limit: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
