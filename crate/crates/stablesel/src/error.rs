use std::path::PathBuf;

use stablesel_core::{Stage, StageError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] stablesel_core::Error),
    #[error("{} stage: {source}", stage.as_str())]
    Stage {
        stage: Stage,
        source: stablesel_core::Error,
    },
    #[error("column `{0}` not found")]
    NamedColumnAbsent(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseFailure {
        row: usize,
        column: String,
        value: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<StageError> for Error {
    fn from(e: StageError) -> Self {
        Error::Stage {
            stage: e.stage,
            source: e.error,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
