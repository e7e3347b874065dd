use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Too few samples fell in the region needed by an estimator.
    #[error("insufficient data: {what} (observed {observed}, need {needed})")]
    InsufficientData {
        what: String,
        observed: usize,
        needed: usize,
    },

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// A symmetric positive-definite factorisation failed even with jitter.
    #[error("factorisation failed for {dim}x{dim} system (max diag {max_diag:e}, min diag {min_diag:e}, jitter tried up to {jitter:e})")]
    Factorization {
        dim: usize,
        max_diag: f64,
        min_diag: f64,
        jitter: f64,
    },

    /// Column normalisation hit a constant column.
    #[error("degenerate column '{0}': minimum equals maximum")]
    DegenerateColumn(String),

    /// A cross-validation fold cannot be used.
    #[error("degenerate fold {fold}: {reason}")]
    DegenerateFold { fold: usize, reason: String },

    /// Input data could not be parsed.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("serialisation error: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Quadrature { .. } => "quadrature",
            Error::Factorization { .. } => "factorization",
            Error::DegenerateColumn(_) => "degenerate_column",
            Error::DegenerateFold { .. } => "degenerate_fold",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Toml(_) | Error::TomlSer(_) => "config_parse",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
