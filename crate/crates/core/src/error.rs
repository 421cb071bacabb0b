use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// `scores` and `k` inputs must be the same length.
    #[error("length mismatch: {scores} scores vs {labels} k labels")]
    LengthMismatch { scores: usize, labels: usize },

    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// `equivalence_check` requires t_ac + t_in > 0.
    #[error("degenerate partition counts: t_ac + t_in = 0")]
    DegenerateCounts,

    /// Filesystem failure, tagged with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file; `detail` names the JSON path or CSV line.
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
