use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("link {link} references unknown node {node:?}")]
    DanglingNode { link: String, node: String },

    #[error("trip {trip_id}: stop times not strictly increasing at stop_sequence {sequence}")]
    NonIncreasingTimes { trip_id: String, sequence: u32 },

    #[error("stop_times.txt:{line}: unknown stop_id {stop_id:?}")]
    UnknownStop { stop_id: String, line: u64 },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("unknown phase {0:?}")]
    UnknownPhase(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mode {0} is not available for this trip")]
    UnavailableMode(crate::choice::Mode),

    #[error("calibration did not converge after {iterations} iterations (residuals: {residuals:?})")]
    NonConvergence {
        iterations: usize,
        residuals: Vec<(String, f64)>,
    },

    #[error("observable {0} present in targets but missing from simulated output")]
    MissingObservable(String),

    #[error("no {mode} path from node {from} to node {to}")]
    NoPath {
        mode: crate::choice::Mode,
        from: String,
        to: String,
    },

    #[error("unresolved asset: {0}")]
    Unresolved(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
