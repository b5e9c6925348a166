use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the range a model is valid for.
    #[error("{quantity} = {value} is outside the valid range [{min}, {max}]")]
    Domain {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no phasematching between {lo_nm} nm and {hi_nm} nm (mismatch does not change sign)")]
    NoPhasematching { lo_nm: f64, hi_nm: f64 },

    #[error("co-propagating QPM impossible: k_p - k_s - k_i = {0} rad/um is not positive")]
    QpmImpossible(f64),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("FWHM undefined: {0}")]
    UndefinedFwhm(&'static str),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("Schmidt decomposition failed: {0}")]
    Decomposition(String),

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(&'static str),

    #[error("unknown material set `{0}`")]
    UnknownMaterial(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
