use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input has no in-vocabulary features")]
    EmptyFeatures,

    #[error("not a model file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported model format version {0}")]
    BadVersion(u32),

    #[error("malformed model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
