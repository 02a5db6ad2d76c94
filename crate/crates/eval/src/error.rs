use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("missing dataset: {0}")]
    Missing(String),
    #[error(transparent)]
    Model(#[from] flowbridge_core::ModelError),
    #[error(transparent)]
    Data(#[from] flowbridge_spectra::DataError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<flowbridge_core::TensorError> for EvalError {
    fn from(e: flowbridge_core::TensorError) -> Self {
        EvalError::Input(e.to_string())
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
