use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the surrogate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent arguments (dimension mismatch, empty input, non-finite values).
    #[error("invalid input: {0}")]
    Input(String),

    /// Fewer than `ratio` observations per basis function.
    #[error(
        "{centres} centres need at least {required} observations under the {ratio}x rule, \
         but only {observations} are available (max {max_centres} centres)"
    )]
    BasisRatio {
        centres: usize,
        ratio: usize,
        observations: usize,
        required: usize,
        max_centres: usize,
    },

    /// The least-squares solve produced a non-finite result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Every shape candidate in a sweep was skipped.
    #[error("all {} shape candidates failed: {}", skipped.len(), describe_skipped(skipped))]
    FitFailure { skipped: Vec<(f64, String)> },

    #[error("config error in field `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        field: String,
        line: Option<usize>,
        message: String,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn describe_skipped(skipped: &[(f64, String)]) -> String {
    skipped
        .iter()
        .map(|(shape, why)| format!("eps={shape:e} ({why})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
