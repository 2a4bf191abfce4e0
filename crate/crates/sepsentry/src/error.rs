//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cohort")]
    EmptyCohort,

    #[error("empty series for patient {0}")]
    EmptySeries(String),

    #[error("degenerate labels: only one class present")]
    DegenerateLabels,

    #[error("undefined AUC: only one class present")]
    UndefinedAuc,

    #[error("fold {0} has a single class in its training split")]
    DegenerateFold(usize),

    #[error("infeasible recall target {0}")]
    InfeasibleRecall(f64),

    #[error("invalid feature recipe: {0}")]
    Recipe(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("feature columns do not match model: missing {missing:?}, extra {extra:?}")]
    ColumnMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("{path}: parse error at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("model file error at line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a file path to a raw I/O error.
    pub fn file(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
