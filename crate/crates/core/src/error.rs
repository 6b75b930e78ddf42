use thiserror::Error;

/// Errors produced by the simulation, integration and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A posterior variance reached or crossed zero.
    #[error("posterior variance D[{index}] = {value} is not positive{context}")]
    NonPositiveVariance {
        index: usize,
        value: f64,
        context: String,
    },

    #[error("non-finite value encountered at t = {t}: {what}")]
    NonFinite { t: f64, what: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A failure inside one job of a sweep.
    #[error("{point}: {source}")]
    AtPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::AtPoint { source, .. } => source.is_config(),
            other => matches!(
                other,
                Error::Config(_) | Error::Parse(_) | Error::Dimension(_)
            ),
        }
    }

    /// Attaches a grid-point label such as `case=matched beta=0.5 seed=3`.
    pub fn at(self, point: impl Into<String>) -> Self {
        Error::AtPoint {
            point: point.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
