use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {field}: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid scene: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("integration diverged for seed ({x:.3}, {y:.3}) at step {step}")]
    Integration { x: f64, y: f64, step: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("input error: {path}: {detail}")]
    Input { path: PathBuf, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, used as the CLI's error prefix.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format-error",
            Error::Range(_) => "range-error",
            Error::Validation(_) => "validation-error",
            Error::Integration { .. } => "integration-error",
            Error::Parameter(_) => "parameter-error",
            Error::DegenerateGraph(_) => "degenerate-graph",
            Error::Numerical(_) => "numerical-error",
            Error::Input { .. } => "input-error",
            Error::Parse(_) => "parse-error",
            Error::Stage { source, .. } => source.category(),
            Error::Io(_) => "io-error",
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
