use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// A convergence test could not be decided within the panel budget.
    #[error("quadrature inconclusive: {0}")]
    QuadratureInconclusive(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("scale function diverges at the lower end (s(a+) = -inf)")]
    ScaleNotNormalizable,

    #[error("upper end is reachable: s(b-) = {0} is finite")]
    UpperEndReachable(f64),

    #[error(transparent)]
    Expression(#[from] ExprError),

    #[error("first moment of the distribution diverges: {0}")]
    NonIntegrableTail(String),

    #[error("truncation too small: tail {tail:e} exceeds 1e-4 of bulk {bulk:e}")]
    TruncationTooSmall { tail: f64, bulk: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("distributions live on different partitions")]
    GridMismatch,

    #[error("non-positive value {value} at t = {time} in the fitting window")]
    NonPositiveValues { time: f64, value: f64 },

    #[error("not enough points in window ({0} < 3)")]
    TooFewPoints(usize),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config schema error at `{key}`: {message}")]
    Schema { key: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInterval(_) => "InvalidInterval",
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::QuadratureInconclusive(_) => "QuadratureInconclusive",
            Error::UnsupportedDomain(_) => "UnsupportedDomain",
            Error::ScaleNotNormalizable => "ScaleNotNormalizable",
            Error::UpperEndReachable(_) => "UpperEndReachable",
            Error::Expression(_) => "ExpressionError",
            Error::NonIntegrableTail(_) => "NonIntegrableTail",
            Error::TruncationTooSmall { .. } => "TruncationTooSmall",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::GridMismatch => "GridMismatch",
            Error::NonPositiveValues { .. } => "NonPositiveValues",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::Parse { .. } => "ParseError",
            Error::Schema { .. } => "SchemaError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
