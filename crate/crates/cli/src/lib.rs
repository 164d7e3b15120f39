//! Scenario runner for the kerr-core solvers: configuration parsing,
//! subcommands and their on-disk artifacts.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::{parse_config, ConfigError, ConfigErrors, ErrorKind, ScenarioConfig};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Core(#[from] kerr_core::Error),
    #[error("io: {0}")]
    Io(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    messages: Vec<String>,
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }

    /// One-line JSON for the error channel.
    pub fn to_json(&self) -> String {
        let (kind, messages) = match self {
            RunError::Config(e) => {
                let kind = if e.0.iter().any(|x| x.kind == ErrorKind::Parse) {
                    "ParseError"
                } else {
                    "ValidationError"
                };
                (kind, e.0.iter().map(|x| x.to_string()).collect())
            }
            RunError::Core(e) => ("RuntimeError", vec![e.to_string()]),
            RunError::Io(e) => ("IoError", vec![e.clone()]),
        };
        serde_json::to_string(&ErrorJson { error: kind, messages }).unwrap_or_else(|_| "{\"error\":\"unknown\"}".into())
    }
}
