use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("datasets disagree: {0}")]
    Mismatch(String),
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
