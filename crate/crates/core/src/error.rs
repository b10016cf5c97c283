use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate pupil: no transmitted energy")]
    DegeneratePupil,

    #[error("degenerate kernel: zero total energy")]
    DegenerateKernel,

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("dataset build produced no samples ({skipped} skipped)")]
    EmptyBuild { skipped: usize },

    #[error("image codec error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Binary container errors. Each variant maps to its own exit code in the CLI.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("file written with foreign byte order (magic {found:?})")]
    ForeignEndian { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("malformed record: {0}")]
    Malformed(String),
}

impl FormatError {
    pub fn code(&self) -> i32 {
        match self {
            FormatError::BadMagic { .. } => 10,
            FormatError::ForeignEndian { .. } => 11,
            FormatError::UnsupportedVersion(_) => 12,
            FormatError::Truncated { .. } => 13,
            FormatError::DimensionOverflow(_) => 14,
            FormatError::Malformed(_) => 15,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("`{field}` out of range: {bound}")]
    Range { field: String, bound: String },

    #[error("`{field}` references missing path {path}")]
    MissingPath { field: String, path: PathBuf },

    #[error("config syntax: {0}")]
    Syntax(String),
}
