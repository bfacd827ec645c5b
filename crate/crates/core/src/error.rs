use thiserror::Error;

/// Errors raised across loading, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no subjects")]
    NoSubjects,
    #[error("duplicate row for subject {id} at time {time}")]
    DuplicateTime { id: String, time: f64 },
    #[error("unknown state label {label} (subject {id})")]
    UnknownState { id: String, label: i64 },
    #[error("no kernel mass at x = {0:?}")]
    NoKernelMass(Vec<f64>),
    #[error("degenerate density")]
    DegenerateDensity,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rate for transition {from} -> {to} is negative ({value}) at t = {time}")]
    NegativeRate {
        from: i64,
        to: i64,
        time: f64,
        value: f64,
    },
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T> = std::result::Result<T, Error>;
