use std::path::PathBuf;

use eventmarket_milp::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("missing section: {0}")]
    MissingSection(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported gencost model {model} for generator {gen}")]
    UnsupportedModel { gen: usize, model: i64 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solver stopped at a limit with no feasible point ({0})")]
    LimitReached(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CoreError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// The error underneath any stage tags.
    pub fn root(&self) -> &CoreError {
        match self {
            CoreError::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        CoreError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
