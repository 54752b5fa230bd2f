use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("validation error: {0}")]
    Validation(movpi_core::Error),

    #[error("numerical failure: {0}")]
    Numerical(movpi_core::Error),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Manifest(_) | CliError::Validation(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Manifest(_) => "manifest",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Verification(_) => "verification",
            CliError::Output { .. } => "output",
        }
    }

    /// The machine-readable form printed on stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() });
        if let CliError::Validation(movpi_core::Error::SeparationViolation { first, second, time, distance, required }) = self {
            v["pair"] = json!([first, second]);
            v["time"] = json!(time);
            v["distance"] = json!(distance);
            v["required"] = json!(required);
        }
        v
    }

    pub fn output(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Output { path: path.display().to_string(), source }
    }
}

impl From<movpi_core::Error> for CliError {
    fn from(e: movpi_core::Error) -> Self {
        match e {
            movpi_core::Error::SingularStep { .. } => CliError::Numerical(e),
            other => CliError::Validation(other),
        }
    }
}
