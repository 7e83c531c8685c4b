//! Error types shared by the library.

use thiserror::Error;

/// Errors produced by order-book operations and volume sampling.
#[derive(Debug, Error)]
pub enum LobError {
    #[error("empty book: all volumes over the requested depth are zero")]
    EmptyBook,
    #[error("imbalance {0} outside [-1, 1]")]
    ImbalanceOutOfRange(f64),
    #[error("invalid book snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("invalid state variable: {0}")]
    InvalidState(String),
    #[error("Dirichlet parameters missing for state {state}")]
    MissingGamma { state: usize },
    #[error("non-positive Dirichlet parameter at state {state}, component {component}")]
    NonPositiveGamma { state: usize, component: usize },
    #[error(
        "conditional volume sampling exhausted {attempts} attempts \
         (acceptance rate estimate {acceptance_rate:.6})"
    )]
    RejectionBudgetExhausted { attempts: usize, acceptance_rate: f64 },
}

/// Errors produced by the point-process engine.
#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("time interval reversed: t1 = {t1} < t0 = {t0}")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("non-finite intensity encountered at t = {t}")]
    NonFiniteIntensity { t: f64 },
    #[error("event history is not strictly increasing at index {index}")]
    NonIncreasingTimes { index: usize },
    #[error("invalid liquidation config: {0}")]
    InvalidLiquidation(String),
}

/// Errors produced by calibration.
#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("zero intensity at observed event index {index} (type {event_type})")]
    ZeroIntensityAtEvent { index: usize, event_type: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Errors produced by the impact profiler.
#[derive(Debug, Error)]
pub enum ImpactError {
    #[error("no liquidator activity: cannot estimate phi0 from zero fills")]
    NoLiquidatorActivity,
    #[error("invalid state bijection: {0}")]
    InvalidBijection(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Errors produced while ingesting LOBSTER files.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row count mismatch: message file has {messages} rows, orderbook file has {books}")]
    RowCountMismatch { messages: usize, books: usize },
    #[error("malformed row {line} in {path}: {reason}")]
    MalformedRow { path: String, line: usize, reason: String },
    #[error("orderbook row {line} has fewer than {depth} levels")]
    InsufficientDepth { line: usize, depth: usize },
}
