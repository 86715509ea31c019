use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error(
        "LCP solver did not converge after {iterations} iterations (best residual {residual:e})"
    )]
    LcpNonConvergence { iterations: usize, residual: f64 },

    #[error("counterexample construction failed: {0}")]
    Construction(String),

    #[error("scenario error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
