use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation point s = {0} lies in the future")]
    FuturePoint(f64),

    #[error("interval [{a}, {b}] is not inside the represented window [{lo}, 0]")]
    OutsideWindow { a: f64, b: f64, lo: f64 },

    #[error("history depth {depth} is too small, need at least {needed}")]
    DepthTooSmall { depth: f64, needed: f64 },

    #[error("history contains non-finite values")]
    NonFinite,

    #[error("unknown coefficient id `{0}`")]
    UnknownCoefficient(String),

    #[error("grid incompatibility: {0}")]
    Grid(String),

    #[error("blow-up at t = {t}: |z| = {norm:e}")]
    BlowUp { t: f64, norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fixed-point iteration stopped after {iterations} iterations with change {change:e}")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("neutral operator is not a contraction: q = {0} >= 1")]
    NotContracting(f64),

    #[error("no return times found in the probe window")]
    NoReturnPairs,
}

pub type Result<T> = std::result::Result<T, Error>;
