use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis label {label} outside stored range [{first}, {last}]")]
    LabelOutOfRange { label: i64, first: i64, last: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "quadrature did not converge: estimate {value:e} with error {achieved:e} \
         (requested {requested:e})"
    )]
    Quadrature {
        value: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LabelOutOfRange { .. } => "range",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Quadrature { .. } => "quadrature",
            Error::Numeric(_) => "numeric",
            Error::Fit(_) => "fit",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
