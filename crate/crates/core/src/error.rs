use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative method did not reach its stated accuracy.
    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed file contents or header.
    #[error("format error: {0}")]
    Format(String),

    #[error("waveform clips at sample {index} (t = {time_s:e} s, |f| = {value_hz:e} Hz > full scale {full_scale_hz:e} Hz)")]
    Clipping {
        index: usize,
        time_s: f64,
        value_hz: f64,
        full_scale_hz: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
