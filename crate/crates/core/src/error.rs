use thiserror::Error;

pub type QdResult<T> = Result<T, QdError>;

#[derive(Debug, Error)]
pub enum QdError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("point ({u}, {v}) lies outside the Bloch disk")]
    OutsideDisk { u: f64, v: f64 },

    #[error("forbidden branch: weight {0:e} below threshold")]
    ForbiddenBranch(f64),

    #[error("dropped mass {dropped:e} exceeds cap {cap:e}")]
    DroppedMass { dropped: f64, cap: f64 },

    #[error("peak count {requested} exceeds cap {cap}")]
    PeakCap { requested: usize, cap: usize },

    #[error("tree depth {n} exceeds the dense cap {cap}")]
    DepthCap { n: usize, cap: usize },

    #[error("table size {requested} exceeds cap {cap}")]
    TableCap { requested: usize, cap: usize },

    #[error("operation requires the {expected} variant, got {got}")]
    WrongVariant { expected: &'static str, got: String },

    #[error("degenerate ensemble: {0}")]
    Degenerate(String),

    #[error("ensemble is not close to the unit circle (max |r^2 - 1| = {0:e})")]
    NotOnCircle(f64),

    #[error("no sign change of lambda_d - 1 in bracket ({lo}, {hi})")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("inconsistent fraction: t={t}, k={k}, n={n}")]
    BadFraction { t: usize, k: usize, n: usize },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QdError {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            QdError::InvalidParam(_)
            | QdError::WrongVariant { .. }
            | QdError::BadFraction { .. }
            | QdError::Parse(_) => 1,
            QdError::PeakCap { .. } | QdError::TableCap { .. } | QdError::DepthCap { .. } => 3,
            QdError::Io(_) | QdError::Json(_) => 1,
            _ => 2,
        }
    }
}
