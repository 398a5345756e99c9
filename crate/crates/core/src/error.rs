use thiserror::Error;

use crate::radio::ApId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite signal level {0} dBm")]
    InvalidUnit(f64),
    #[error("power must be strictly positive, got {0} mW")]
    NonPositivePower(f64),
    #[error("distance must be strictly positive, got {0} m")]
    InvalidDistance(f64),
    #[error("the SNAP-WPS model only maps signal strength to distance")]
    UnsupportedDirection,
    #[error("unknown propagation model `{0}` (expected friis, interlink or snap-wps)")]
    UnknownModel(String),
    #[error("invalid path-loss exponent {0}")]
    InvalidExponent(f64),
    #[error("scan references unknown access point `{0}`")]
    UnknownAp(ApId),
    #[error("position coincides with access point `{0}`")]
    DegenerateRange(ApId),
    #[error("need at least {need} qualified access points, have {have}")]
    InsufficientObservations { need: usize, have: usize },
    #[error("normal matrix is singular for the current geometry")]
    SingularGeometry,
    #[error("floor index {index} out of range (grid has {floors} floors)")]
    IndexError { index: usize, floors: usize },
    #[error("pixel ({0}, {1}) is not part of the cell")]
    InvalidPixel(usize, usize),
    #[error("cell has {0} pixel(s); the indicator needs at least 2")]
    CellTooSmall(usize),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    ValidationError { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ValidationError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
