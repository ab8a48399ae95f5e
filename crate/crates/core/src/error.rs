use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rate family `{0}` is not differentiable in the activity")]
    NonDifferentiable(&'static str),

    #[error("value {value} outside admissible range {range}")]
    OutOfRange { value: f64, range: String },

    #[error("tail bracket width {width:e} exceeds tolerance {tolerance:e}; increase x_max")]
    TailTooWide { width: f64, tolerance: f64 },

    #[error("{0} requires an inhibitory rate model")]
    NotInhibitory(&'static str),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("densities live on different grids")]
    GridMismatch,

    #[error("negative or non-finite density value {value} at cell {cell}")]
    InvalidDensity { cell: usize, value: f64 },

    #[error("trace too short: covers t = {covered}, needs t = {needed}")]
    TraceTooShort { covered: f64, needed: f64 },

    #[error("no decay regime found in trace")]
    NoDecayRegime,

    #[error("need at least {needed} samples above 1e-13, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no sign change of the period-2 residual: {0}")]
    NoPeriodTwoBracket(String),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config { .. }
                | Error::NotInhibitory(_)
                | Error::GridMismatch
                | Error::InvalidDensity { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}
