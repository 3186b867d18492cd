use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument or configuration field is outside its domain.
    #[error("invalid `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("distribution dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },

    /// `q` never exceeds `p`, so a rejection cannot happen and the residual is undefined.
    #[error("residual distribution is degenerate: target never exceeds draft")]
    DegenerateResidual,

    #[error("layer {layer} outside [1, {n_layers}]")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
