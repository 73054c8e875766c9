use std::path::Path;

use thiserror::Error;
use uwbloc_autodiff::AutodiffError;
use uwbloc_core::dataset::DatasetError;
use uwbloc_core::eval::EvalError;
use uwbloc_core::go::GoError;
use uwbloc_core::sim::SimError;
use uwbloc_models::ModelError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(String),
    #[error("missing {what}: {path} (run `{step}` first)")]
    Missing {
        what: &'static str,
        path: String,
        step: &'static str,
    },
    #[error("{path} was produced by config {found}, current config is {expected}; re-run `{step}`")]
    Stale {
        path: String,
        found: String,
        expected: String,
        step: &'static str,
    },
    #[error("bad artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Go(#[from] GoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl Into<String>) -> Self {
        CliError::Artifact {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}
