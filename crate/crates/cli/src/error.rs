use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("{}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] termnmt::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            msg: err.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Missing(_) => "missing_input",
            CliError::Input { .. } => "input",
            CliError::Mismatch(_) => "mismatch",
            CliError::Core(_) => "pipeline",
        }
    }
}

/// The single line written to stderr on failure.
#[derive(Serialize)]
pub struct ErrorReport<'a> {
    pub command: &'a str,
    pub kind: &'a str,
    pub message: String,
}

impl<'a> ErrorReport<'a> {
    pub fn new(command: &'a str, err: &CliError) -> Self {
        ErrorReport {
            command,
            kind: err.kind(),
            message: err.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}
