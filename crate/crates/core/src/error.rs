use thiserror::Error;

/// Errors shared across the whole library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or axis mismatch between tensors.
    #[error("dimension: {0}")]
    Dimension(String),

    /// Invalid numeric input (division by zero, log of a nonpositive value,
    /// non-finite results, parameters outside their domain).
    #[error("domain: {0}")]
    Domain(String),

    /// Precondition on how an API must be used was violated.
    #[error("contract: {0}")]
    Contract(String),

    /// Training diverged or produced a non-finite quantity.
    #[error("training: step {step}: {detail}")]
    Training { step: usize, detail: String },

    /// Numerical linear algebra failure (singular or rank-deficient input).
    #[error("linear-algebra: {0}")]
    LinearAlgebra(String),

    /// Malformed binary file, with the byte offset where parsing failed.
    #[error("format: {detail} (byte offset {offset})")]
    Format { offset: u64, detail: String },

    /// Invalid run configuration.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-parseable kind tag, used by the CLI for one-line errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::Training { .. } => "training",
            Error::LinearAlgebra(_) => "linear-algebra",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
