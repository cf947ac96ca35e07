//! Error type shared by all estimation modules.

use thiserror::Error;

/// Errors produced by data ingestion, sampling and the fitting routines.
#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("malformed csv at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },

    #[error("non-positive price {value} at row {row}, column {column}")]
    NonPositivePrice {
        row: String,
        column: String,
        value: f64,
    },

    #[error("duplicate date {date}")]
    DuplicateDate { date: String },

    #[error("price panel needs at least two rows")]
    FewerThanTwoRows,

    #[error("target column {name} not found in panel")]
    UnknownTarget { name: String },

    #[error("panel has no instrument columns besides the target")]
    DegeneratePanel,

    #[error("decay factor must lie in (0, 1], got {alpha}")]
    InvalidAlpha { alpha: f64 },

    #[error("weight vector length must be at least 1")]
    ZeroLength,

    #[error("penalty strength must be a finite nonnegative real, got {lambda}")]
    InvalidLambda { lambda: f64 },

    #[error("invalid cost model: {message}")]
    InvalidCostModel { message: String },

    #[error("series of length {len} too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    SingularDesign { columns: Vec<String> },

    #[error("unit cost at index {index} must be positive, got {value}")]
    NonPositiveCost { index: usize, value: f64 },

    #[error("eigendecomposition failed to converge")]
    EigenFailure,

    #[error("degenerate covariance: eigenvalue {eigenvalue:e} below threshold for trace {trace:e}")]
    DegenerateCovariance { eigenvalue: f64, trace: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("factor scores are singular; cannot regress on them")]
    SingularScores,

    #[error("loading matrix condition number {cond:e} exceeds 1e10; hedge extraction refused")]
    IllConditionedGamma { cond: f64 },

    #[error("sigma must be positive, got {sigma}")]
    NonPositiveSigma { sigma: f64 },

    #[error("training loss became non-finite at epoch {epoch} (last recon {recon:e}, kl {kl:e})")]
    NonFiniteLoss { epoch: usize, recon: f64, kl: f64 },

    #[error("panel has zero instrument columns")]
    ZeroInstruments,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least 100 residuals for a 1% quantile, got {len}")]
    TooFewResiduals { len: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, HedgeError>;
