use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VadError> = std::result::Result<T, E>;

/// Every failure the toolkit can surface.
///
/// Each variant has a stable machine-readable [`code`](VadError::code) and maps
/// onto a process exit status through [`exit_code`](VadError::exit_code).
#[derive(Debug, Error)]
pub enum VadError {
    #[error("magic mismatch at byte {offset}: expected \"HVADFT01\"")]
    MagicMismatch { offset: u64 },

    #[error("truncated payload at byte {offset}: needed {needed} more bytes, {available} available")]
    TruncatedPayload {
        offset: u64,
        needed: u64,
        available: u64,
    },

    #[error("non-finite value at byte {offset}")]
    NonFiniteValue { offset: u64 },

    #[error("trailing data at byte {offset}")]
    TrailingData { offset: u64 },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation at line {line}: {message}")]
    SchemaViolation { line: usize, message: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("glance {index} out of range for series of length {len}")]
    GlanceOutOfRange { index: usize, len: usize },

    #[error("glance set is empty")]
    EmptyGlanceSet,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("only one class present in labels")]
    SingleClass,

    #[error("client request timed out after {attempts} attempt(s)")]
    ClientTimeout { attempts: u32 },

    #[error("client returned HTTP status {status}")]
    ClientHttpError { status: u16 },

    #[error("client transport error: {0}")]
    ClientTransport(String),

    #[error("client returned an empty caption")]
    EmptyCaption,

    #[error("template render error: {0}")]
    TemplateRenderError(String),

    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl VadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VadError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(line: usize, message: impl Into<String>) -> Self {
        VadError::SchemaViolation {
            line,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            VadError::MagicMismatch { .. } => "MagicMismatch",
            VadError::TruncatedPayload { .. } => "TruncatedPayload",
            VadError::NonFiniteValue { .. } => "NonFiniteValue",
            VadError::TrailingData { .. } => "TrailingData",
            VadError::Io { .. } => "IoFailure",
            VadError::SchemaViolation { .. } => "SchemaViolation",
            VadError::InvalidValue(_) => "InvalidValue",
            VadError::GlanceOutOfRange { .. } => "GlanceOutOfRange",
            VadError::EmptyGlanceSet => "EmptyGlanceSet",
            VadError::LengthMismatch { .. } => "LengthMismatch",
            VadError::DimMismatch { .. } => "DimMismatch",
            VadError::DegenerateDataset(_) => "DegenerateDataset",
            VadError::SingleClass => "SingleClass",
            VadError::ClientTimeout { .. } => "ClientTimeout",
            VadError::ClientHttpError { .. } => "ClientHttpError",
            VadError::ClientTransport(_) => "ClientTransport",
            VadError::EmptyCaption => "EmptyCaption",
            VadError::TemplateRenderError(_) => "TemplateRenderError",
            VadError::SpecInvalid(_) => "SpecInvalid",
            VadError::ConfigParse(_) => "ConfigParseError",
            VadError::InvalidConfig(_) => "InvalidConfig",
            VadError::Checkpoint(_) => "CheckpointError",
        }
    }

    /// 2 for I/O and client failures, 1 for everything else (validation).
    pub fn exit_code(&self) -> i32 {
        match self {
            VadError::Io { .. }
            | VadError::ClientTimeout { .. }
            | VadError::ClientHttpError { .. }
            | VadError::ClientTransport(_)
            | VadError::EmptyCaption => 2,
            _ => 1,
        }
    }

    /// Errors a client wrapper is allowed to retry.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            VadError::ClientTimeout { .. }
                | VadError::ClientHttpError { .. }
                | VadError::ClientTransport(_)
                | VadError::EmptyCaption
        )
    }
}
