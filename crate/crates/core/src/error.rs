use thiserror::Error;

use crate::spectral::WaveVector;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero wavevector is not a valid mode index")]
    ZeroWaveVector,

    #[error("wavevector {0} is not in the canonical half-shell")]
    OutsideShell(WaveVector),

    #[error("duplicate wavevector {0} in field snapshot")]
    DuplicateMode(WaveVector),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("non-finite state at t = {t} (step {step})")]
    NonFinite { t: f64, step: usize },

    #[error("non-finite state produced by {0}")]
    NonFiniteStep(&'static str),

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),

    #[error("malformed input on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
