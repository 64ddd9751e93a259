use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} is {got}, expected {expected}")]
    Shape {
        op: &'static str,
        dim: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL number {cfl:.4} exceeds the stability limit {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("wavefield became non-finite at time step {step}")]
    Unstable { step: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("chain aborted at iteration {iteration}: {reason}")]
    ChainAbort { iteration: usize, reason: String },

    #[error("optimization diverged at iteration {iteration}: objective {value:.6e} exceeds 10x the running minimum {minimum:.6e}")]
    Diverged { iteration: usize, value: f64, minimum: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("array file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: String, cause: Box<Error> },
}

impl Error {
    pub(crate) fn shape(op: &'static str, dim: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Shape {
            op,
            dim: dim.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            cause: Box::new(self),
        }
    }
}
