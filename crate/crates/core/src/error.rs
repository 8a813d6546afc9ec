use thiserror::Error;

/// Errors produced by schedules, score fields, rescaling policies and samplers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside evaluation domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("operation not supported for the {0} schedule")]
    UnsupportedSchedule(&'static str),

    #[error("degenerate schedule at t = {0}: velocity/score conversion is singular")]
    DegenerateSchedule(f64),

    #[error("policy misuse: {0}")]
    PolicyMisuse(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("incompatible configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite and > 0, got {value}")))
    }
}
