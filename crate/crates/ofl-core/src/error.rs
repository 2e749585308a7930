use thiserror::Error;

/// Errors produced by generators, solvers and the experiment harness.
///
/// Everything here is a caller-visible condition (invalid input, exceeded
/// size cap, malformed file); internal invariant breaches panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point id {id} out of range for a space with {n_points} points")]
    InvalidPoint { id: usize, n_points: usize },

    #[error("size cap exceeded: {what} = {got}, cap = {cap}")]
    SizeCap {
        what: &'static str,
        got: usize,
        cap: usize,
    },

    #[error("parameter out of numeric range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied input (as opposed to
    /// environment failures such as io). The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
