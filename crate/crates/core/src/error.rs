use thiserror::Error;

/// Errors raised by the library. Variants group into three families that the
/// CLI maps to exit codes: validation/domain (1), I/O and container format (2),
/// numeric (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt chunk {tag:?} at byte offset {offset}: {detail}")]
    Corrupt {
        tag: String,
        offset: u64,
        detail: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("insufficient support: {found} candidate points, need at least {required}")]
    InsufficientSupport { found: usize, required: usize },

    #[error("non-finite gradient in constraint {constraint}")]
    Divergence { constraint: String },

    #[error("inconclusive finite-difference sample: {0}")]
    Inconclusive(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Config(_) => 1,
            Error::Io { .. } | Error::Format(_) | Error::Corrupt { .. } => 2,
            Error::Numeric(_)
            | Error::DegenerateMask(_)
            | Error::InsufficientSupport { .. }
            | Error::Divergence { .. }
            | Error::Inconclusive(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
