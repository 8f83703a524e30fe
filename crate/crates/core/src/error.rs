use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("row coverage infeasible: {quota} training cells cannot cover {rows} non-empty rows")]
    CoverageInfeasible { quota: usize, rows: usize },

    #[error("covariance is not positive definite: {0}")]
    Covariance(String),

    #[error("training diverged at epoch {epoch} (objective is not finite); try a smaller learning rate than {learning_rate}")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("training mask has no observed cells")]
    EmptyTrainingMask,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: line {line}: accuracy {value} outside [0, 1]")]
    Validation {
        path: PathBuf,
        line: u64,
        value: f64,
    },

    #[error("{path}: line {line}: duplicate pair ({worker}, {task}), first seen on line {first_line}")]
    Duplicate {
        path: PathBuf,
        line: u64,
        first_line: u64,
        worker: String,
        task: String,
    },

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// An I/O error that names the file involved.
pub(crate) fn io_at(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

impl Error {
    /// Process exit code for the CLI: 2 for data and validation problems,
    /// 3 for numerical divergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::InvalidMatrix(_)
            | Error::CoverageInfeasible { .. }
            | Error::Covariance(_)
            | Error::EmptyTrainingMask
            | Error::UndefinedMetric(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Duplicate { .. }
            | Error::NoData(_)
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::IndexOutOfRange { .. }
            | Error::RankOutOfRange { .. }
            | Error::Parameter(_)
            | Error::Plan(_) => 1,
        }
    }
}
