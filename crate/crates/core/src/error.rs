use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("calibration record missing at {path}: run `lab calibrate-c0` first")]
    MissingCalibration { path: String },

    #[error("calibration record does not match: {0}")]
    CalibrationMismatch(String),

    #[error("LP solver failed: {0}")]
    Solver(String),

    #[error("invalid moment sequence: {0}")]
    InvalidMoments(String),

    #[error("tester exceeded its query budget of {budget}")]
    BudgetExceeded { budget: usize },

    #[error("too many queries: {got} (maximum {max})")]
    TooManyQueries { got: usize, max: usize },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("instance file: {0}")]
    InstanceFormat(String),

    #[error("format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LabError::DimensionMismatch { expected, got })
    }
}
