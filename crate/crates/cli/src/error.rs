use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("resume conflict: {} {1}", .0.display())]
    ResumeConflict(PathBuf, String),

    #[error("numeric failure: {0}")]
    Numeric(ceit_core::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Malformed(String),
}

impl From<ceit_core::Error> for CliError {
    fn from(e: ceit_core::Error) -> Self {
        use ceit_core::Error as E;
        match e {
            E::Io(io) => CliError::Io(io),
            E::Format(m) => CliError::Malformed(m),
            E::Json(j) => CliError::Malformed(j.to_string()),
            E::Geometry(_) | E::Grid(_) | E::Ring(_) | E::Mesh(_) | E::Invalid(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Malformed(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::MissingInput(_) | CliError::ResumeConflict(..) | CliError::Io(_) | CliError::Malformed(_) => 4,
        }
    }
}
