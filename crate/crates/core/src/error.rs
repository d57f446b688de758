use thiserror::Error;

/// Crate-wide error type.
///
/// Errors map onto the CLI exit-code contract: everything here is either a
/// usage/input problem (exit 2) or an internal numeric assertion that should
/// be unreachable on valid inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("horizon shortfall: replication {replication} covers {covered} < required {required}")]
    HorizonShortfall {
        replication: usize,
        covered: f64,
        required: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
