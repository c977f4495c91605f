use thiserror::Error;

/// Errors raised across the crate.
///
/// The variants are grouped so the CLI can map them onto exit codes:
/// input problems (2) versus numerical failures (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{what} is numerically singular (condition number {cond:.3e})")]
    Singular { what: String, cond: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Wraps the error with the name of the experiment that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. } | Error::Numerical(_) | Error::DegenerateFit(_) => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
