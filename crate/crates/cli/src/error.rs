use eyecontact_core::analytics::AnalyticsError;
use eyecontact_core::filters::{ExprError, FilterError};
use eyecontact_core::ingest::IngestError;
use eyecontact_core::sync::SyncError;
use eyecontact_core::synth::SynthError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const EXPRESSION: u8 = 2;
    pub const SESSION: u8 = 3;
    pub const SCRIPT: u8 = 4;
    pub const EVALUATION: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Expr(ExprError),
    #[error("{0}")]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Sync(#[from] SyncError),
    #[error("{0}")]
    Synth(#[from] SynthError),
    #[error("{0}")]
    Filter(FilterError),
    #[error("{0}")]
    Analytics(#[from] AnalyticsError),
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::Expr(e) => CliError::Expr(e),
            FilterError::Config(m) => CliError::Config(m),
            other => CliError::Filter(other),
        }
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        CliError::Expr(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Config(_) => exit::IO,
            CliError::Expr(_) => exit::EXPRESSION,
            CliError::Ingest(_) | CliError::Sync(_) => exit::SESSION,
            CliError::Synth(SynthError::InvalidScript(_)) => exit::SCRIPT,
            CliError::Synth(SynthError::Io { .. }) => exit::IO,
            CliError::Filter(_) | CliError::Analytics(_) => exit::EVALUATION,
        }
    }
}
