//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error category, used by callers (notably the CLI) to map
/// failures onto distinct exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad inputs, configuration, or violated preconditions.
    Validation,
    /// Filesystem or encoding failures.
    Io,
    /// A computation could not produce a result.
    Computation,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid dimensions invalid: {0}")]
    InvalidGrid(String),

    #[error("rasters are not aligned: {0}")]
    AlignmentRequired(String),

    #[error("source and target extents do not overlap")]
    ExtentMismatch,

    #[error("empty raster stack")]
    EmptyStack,

    #[error("value outside the operation's domain: {0}")]
    Domain(String),

    #[error("unknown indicator id `{0}`")]
    UnknownIndicator(String),

    #[error("indicator registry is empty")]
    EmptyRegistry,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("records out of time order at index {index}")]
    RecordOrdering { index: usize },

    #[error("record series malformed: {0}")]
    RecordFormat(String),

    #[error("region mask selects no valid cells")]
    EmptyRegion,

    #[error("weights are all zero")]
    DegenerateWeights,

    #[error("land-cover codes missing from the cover table: {codes:?}")]
    UnmappedClass { codes: Vec<i64> },

    #[error("input validation failed: {0}")]
    InputValidation(String),

    #[error("configuration invalid: {0}")]
    Configuration(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cannot render raster: {0}")]
    Render(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an I/O error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidGrid(_) | AlignmentRequired(_) | UnknownIndicator(_) | EmptyRegistry
            | RecordOrdering { .. } | RecordFormat(_) | UnmappedClass { .. }
            | InputValidation(_) | Configuration(_) | Parse { .. } => ErrorCategory::Validation,
            Io { .. } => ErrorCategory::Io,
            ExtentMismatch | EmptyStack | Domain(_) | InsufficientData(_) | EmptyRegion
            | DegenerateWeights | Render(_) => ErrorCategory::Computation,
        }
    }
}
