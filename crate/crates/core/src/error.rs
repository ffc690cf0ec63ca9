use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// An input failed validation. `field` names the offending field or check.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    /// A numeric stage did not converge (iteration, quadrature doubling).
    #[error("{stage} did not converge: {detail}")]
    NonConvergence { stage: String, detail: String },

    /// Neither microlocal region contains the point. Signals a bug.
    #[error("region cover failure at tau = {tau}, |xi'| = {xi_abs}")]
    CoverFailure { tau: f64, xi_abs: f64 },

    /// No convexification zone matched. Signals a bug.
    #[error("zone assignment failure at tau = {tau}, |xi'| = {xi_abs}")]
    ZoneFailure { tau: f64, xi_abs: f64 },

    /// Interface constraint elimination hit a vanishing pivot.
    #[error("singular transmission elimination: {0}")]
    SingularConstraint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn non_convergence(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        LabError::NonConvergence {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code: 2 for validation/config problems, 3 for numeric
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation { .. } | LabError::Config(_) => 2,
            LabError::NonConvergence { .. }
            | LabError::CoverFailure { .. }
            | LabError::ZoneFailure { .. }
            | LabError::SingularConstraint(_) => 3,
            LabError::Io(_) | LabError::Csv(_) => 1,
        }
    }
}
