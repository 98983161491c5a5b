use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("non-positive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("moving-volatility transform requires a window length")]
    MissingWindow,
    #[error("invalid window length {window} for series of length {len}")]
    InvalidWindow { window: usize, len: usize },
    #[error("transform {kind} cannot be applied to a series labelled {label}")]
    WrongInputKind { kind: &'static str, label: &'static str },
    #[error("unknown transform kind '{0}'")]
    UnknownTransform(String),

    #[error("window size {tau} too small for detrending order {order}")]
    WindowTooSmall { tau: usize, order: usize },
    #[error("negative variance {0} in input")]
    NegativeVarianceInput(f64),
    #[error("all segment variances are zero")]
    AllZeroVariances,
    #[error("{excluded} of {total} segment variances are zero; negative moments undefined")]
    ExcessiveZeroVariances { excluded: usize, total: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every cell at tau = {tau} is invalid")]
    InvalidTauRow { tau: usize },
    #[error("fewer than {needed} valid fit points for q = {q} (have {have})")]
    InsufficientFitPoints { q: f64, have: usize, needed: usize },
    #[error("fluctuation column at q = 2 is missing or invalid")]
    MissingVarianceColumn,
    #[error("fluctuation column at q = {0} is missing or invalid")]
    InvalidEdgeColumn(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("q = {0} is not on the grid")]
    QNotOnGrid(f64),
    #[error("profile has no h(2) entry")]
    MissingH2,
    #[error("profile and ribbon grids do not match")]
    GridMismatch,
    #[error("{failed} of {total} surrogate replicas failed (last error: {last})")]
    TooManyFailedReplicas {
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("input contains no data rows")]
    EmptySeries,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{transform}/{stage}: {source}")]
    Stage {
        transform: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::UnknownTransform(_) | Error::MissingWindow => {
                ErrorClass::Config
            }
            Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::QNotOnGrid(_) => {
                ErrorClass::Config
            }
            Error::FileNotFound(_)
            | Error::ParseError { .. }
            | Error::EmptySeries
            | Error::Io(_)
            | Error::Json(_)
            | Error::NonFiniteValue { .. }
            | Error::NonPositiveValue { .. }
            | Error::SeriesTooShort { .. }
            | Error::InvalidWindow { .. }
            | Error::WrongInputKind { .. } => ErrorClass::Data,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Numerical,
        }
    }

    pub(crate) fn at_stage(self, transform: &str, stage: &'static str) -> Self {
        Error::Stage {
            transform: transform.to_string(),
            stage,
            source: Box::new(self),
        }
    }
}
