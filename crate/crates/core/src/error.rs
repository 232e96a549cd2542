use std::path::PathBuf;

use thiserror::Error;

use crate::evaluation::EvalError;
use crate::features::PcaError;
use crate::garch_midas::MidasError;
use crate::marketdata::DataError;
use crate::realized_vol::RvError;
use crate::simlab::SimError;
use crate::transformer::ModelError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; each module keeps its own error type and converts into this one.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Rv(#[from] RvError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Midas(#[from] MidasError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for input or validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            Error::Rv(e) => e.is_numerical(),
            Error::Pca(e) => e.is_numerical(),
            Error::Midas(e) => e.is_numerical(),
            Error::Model(e) => e.is_numerical(),
            _ => false,
        };
        if numerical {
            3
        } else {
            2
        }
    }
}
