use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the correspondence pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("binary PLY is not supported (ascii only)")]
    BinaryPly,

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("tangent frame error at vertex {vertex}: {message}")]
    Frame { vertex: usize, message: String },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("eigensolver did not converge after {iterations} iterations ({converged}/{requested} pairs)")]
    Convergence {
        iterations: usize,
        converged: usize,
        requested: usize,
    },

    #[error("factorization failed: zero or non-finite pivot at column {column}")]
    Factorization { column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular row system at row {row}")]
    Solve { row: usize },

    #[error("spectrum error: {0}")]
    Spectrum(String),

    #[error("cache version {found} not supported (expected {expected})")]
    CacheVersion { found: u32, expected: u32 },

    #[error("cache mesh hash {found:016x} does not match mesh hash {expected:016x}")]
    HashMismatch { found: u64, expected: u64 },

    #[error("cache corrupted: {0}")]
    Corruption(String),

    #[error("optimization diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("mesh is disconnected: {} unreachable vertices (first: {:?})", .0.len(), .0.first())]
    Disconnected(Vec<usize>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
