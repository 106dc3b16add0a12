use pg_limits::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed flags, files or parameters (exit 2).
    #[error("{0}")]
    Validation(String),
    /// A mathematical precondition of the instance fails (exit 3).
    #[error("{message}")]
    Precondition { kind: &'static str, message: String },
    /// Reading or writing files failed (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Precondition { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Precondition { kind, .. } => kind,
            CliError::Io(_) => "io",
        }
    }

    /// Single-line JSON rendering for stderr.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Line {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error line serializes")
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_validation() {
            return CliError::Validation(e.to_string());
        }
        let kind = match e {
            CoreError::UnstableClosedLoop { .. } => "unstable_closed_loop",
            CoreError::NonConvergence { .. } => "non_convergence",
            CoreError::StepLeftStabilizingSet { .. } => "step_left_stabilizing_set",
            CoreError::SingularNoise => "singular_noise",
            CoreError::NotStabilizable => "not_stabilizable",
            CoreError::NullspaceViolation { .. } => "nullspace_violation",
            CoreError::SingularRegressor { .. } => "singular_regressor",
            CoreError::Dimension(_) | CoreError::InvalidParameter(_) => "validation",
        };
        CliError::Precondition {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
