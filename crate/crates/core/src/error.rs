use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// An internal invariant was broken; this is a bug, not a user error.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("context length exceeded: {len} tokens, model maximum is {max}")]
    ContextLength { len: usize, max: usize },

    #[error("geometry mismatch at {site}: {detail}")]
    Geometry { site: String, detail: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}:{line}: {msg}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("training did not converge: {msg} (metric trace: {trace:?})")]
    Divergence { msg: String, trace: Vec<f64> },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs or configuration, as
    /// opposed to broken internal invariants.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Invariant(_) | Error::NonFinite(_))
    }
}
