use std::path::PathBuf;

/// Errors produced anywhere in the causal-discovery pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("variable `{variable}` has degenerate (near-zero) variance")]
    DegenerateVariance { variable: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incompatible graphs: {0}")]
    IncompatibleGraphs(String),

    #[error("incompatible tables: {0}")]
    IncompatibleTables(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("missing value in `{variable}` at row {row}")]
    MissingValue { variable: String, row: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalFailure(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
