//! Command implementations behind the `csht` binary.

pub mod commands;
pub mod config;

use std::path::Path;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] csht_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for usage errors and dates outside every graph window, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_date_not_covered() => 2,
            _ => 1,
        }
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

core_from!(
    csht_core::panel::PanelError,
    csht_core::synthetic::SyntheticError,
    csht_core::granger::GrangerError,
    csht_core::model::ModelError,
    csht_core::eval::EvalError
);
