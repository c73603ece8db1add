//! Dataset files, run records, the concurrent runner and score reports
//! behind the `perceptom` command.

pub mod annotate;
pub mod backends;
pub mod dataset;
pub mod record;
pub mod runner;
pub mod score;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use perceptom_core::eval::MetricError;
use perceptom_core::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Stream(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
