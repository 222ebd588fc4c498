use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("empty sample `{0}`")]
    EmptySample(&'static str),

    #[error("quadrature did not converge at x = {x} (error estimate {estimate:e})")]
    Quadrature { x: f64, estimate: f64 },

    #[error("replication failed (alpha = {alpha}, n = {n}, rep = {rep}): {source}")]
    Replication {
        alpha: f64,
        n: u64,
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
