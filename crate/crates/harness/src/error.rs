use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("config key \"{key}\": expected {expected}, got {got}")]
    BadValue { key: String, expected: String, got: String },
    #[error("output {0} already exists (pass --overwrite to replace it)")]
    OutputExists(PathBuf),
    #[error("cannot aggregate records from different experiments: {0:?}")]
    MixedExperiments(Vec<String>),
    #[error("malformed record {path}: {msg}")]
    Record { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] continua::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
