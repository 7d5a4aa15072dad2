use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the path domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("wrong strategy form: {0}")]
    WrongForm(String),
    #[error("path is not monotone: {0}")]
    NotMonotone(String),
    #[error("strategy and unaffected price jump together at t = {0}")]
    CommonJump(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("numerical diagnostics: {0}")]
    Diagnostics(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
