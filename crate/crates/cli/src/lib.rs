//! Config-driven scenario runner for the collision-channel toolkit.
//!
//! A run parses a JSON [`ScenarioConfig`], computes everything in memory
//! ([`run_scenario`]) and then writes CSV tables, `results.json` and
//! `manifest.json` through a staging directory ([`write_outputs`]), so a
//! failed run leaves no partial output behind.

pub mod config;
pub mod run;

use std::path::PathBuf;

pub use config::{parse_config, ScenarioConfig};
pub use run::{run_scenario, write_outputs, RunRecord};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: repscatter_core::Error,
    },

    #[error("{context}")]
    NoConvergence { context: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Numerical { .. } | CliError::NoConvergence { .. } => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}
