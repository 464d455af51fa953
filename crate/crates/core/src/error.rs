use thiserror::Error;

/// Errors raised by the numerical kernels and integrators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("{context}: matrix is rank deficient")]
    RankDeficient { context: String },

    #[error("{context}: ill-conditioned submatrix (pseudoinverse norm {pinv_norm:e})")]
    Conditioning { context: String, pinv_norm: f64 },

    #[error("index selection failed at basis column {column}")]
    Selection { column: usize },

    #[error("model definition error: {0}")]
    ModelDefinition(String),

    #[error("Newton iteration did not converge for column {column} (last update {last_update:e})")]
    NewtonNoConvergence { column: usize, last_update: f64 },

    #[error("row solve diverged for column {column}")]
    Divergence { column: usize },

    #[error("row least-squares system is rank deficient for column {column}")]
    RowConditioning { column: usize },

    #[error("scheme needs {needed} history levels, {available} available")]
    Startup { needed: usize, available: usize },

    #[error("capability limit: {0}")]
    Capability(String),

    #[error("explicit integration blew up at step {step} (t = {t})")]
    Stability { step: usize, t: f64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}
