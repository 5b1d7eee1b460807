use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no feasible green window within {searched} cycles (vehicle must stop)")]
    InfeasibleWindow { searched: u32 },

    #[error("trace too short for transition estimation: {0} samples")]
    TraceTooShort(usize),

    #[error("transition row ({speed_bin}, {from_bin}) sums to {sum}, not 1")]
    NotStochastic {
        speed_bin: usize,
        from_bin: usize,
        sum: f64,
    },

    #[error("battery square-root domain violated: V_oc^2 - 4 r P = {0}")]
    SqrtDomain(f64),

    #[error("scenario geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("scenario config: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
