use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("weight vector is empty")]
    EmptyWeights,

    #[error("weight entry {index} is not strictly positive (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mixing row sums to {sum} instead of 1")]
    NotStochastic { sum: f64 },

    #[error("normal equations are singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("state diverged at iteration {t} (max |entry| = {magnitude:e})")]
    Diverged { t: u64, magnitude: f64 },

    #[error("T = {t} is below threshold {name} = {value}")]
    BelowThreshold {
        name: &'static str,
        value: f64,
        t: u64,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("malformed matrix file: {0}")]
    MatrixFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
