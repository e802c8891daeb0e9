use thiserror::Error;

/// Errors surfaced by the library. Numerical failures carry enough context to
/// locate the offending evaluation without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    Singularity(String),

    #[error("negative radicand in Hubble map for {model} at z={z}: {detail}")]
    HubbleRadicand {
        model: &'static str,
        z: f64,
        detail: String,
    },

    #[error("non-finite value in {context} at {location}")]
    NonFinite { context: &'static str, location: String },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
