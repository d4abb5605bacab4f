use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad or insufficient input data (corpus, tables, triples).
    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("checkpoint error at byte offset {offset}: {message}")]
    Checkpoint { offset: u64, message: String },

    #[error("training diverged in stage {stage} at epoch {epoch}: loss is {loss}")]
    Diverged {
        stage: String,
        epoch: usize,
        loss: f64,
    },

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Diverged { .. } => 3,
            _ => 2,
        }
    }
}
