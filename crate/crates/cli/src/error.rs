use std::fmt;

use serde_json::json;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration, bad overrides, invalid inputs.
    Config(String),
    /// The numerical work itself failed.
    Solver(String),
    /// Reading or writing files failed.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }

    /// One-line JSON record for machine consumption.
    pub fn record(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.message(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl From<uvm::Error> for CliError {
    fn from(e: uvm::Error) -> Self {
        use uvm::Error as E;
        let mut root = &e;
        while let E::Step { source, .. } | E::AtDelta { source, .. } = root {
            root = source;
        }
        let message = e.to_string();
        match root {
            E::InvalidParams(_)
            | E::InvalidGrid(_)
            | E::InvalidPayoff(_)
            | E::InvalidConfig(_)
            | E::InvalidInput(_) => CliError::Config(message),
            E::Io(_) | E::Csv(_) => CliError::Io(message),
            _ => CliError::Solver(message),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
