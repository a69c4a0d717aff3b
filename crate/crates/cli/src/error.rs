use std::fmt;
use std::path::Path;

use obfs_core::ObfsError;
use serde_json::json;

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Input(String),
    Io(String),
    Core(ObfsError),
    /// A verified property did not hold.
    Property(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// 1 property failure, 2 input error, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Io(_) => "io",
            CliError::Core(e) if e.is_numeric() => "numeric",
            CliError::Core(ObfsError::Csv { .. } | ObfsError::InvalidSample(_)) => "input",
            CliError::Core(_) => "model",
            CliError::Property(_) => "property",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Core(ObfsError::Csv { line, .. }) = self {
            v["line"] = json!(line);
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Io(m) | CliError::Property(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ObfsError> for CliError {
    fn from(e: ObfsError) -> Self {
        CliError::Core(e)
    }
}
