use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants follow the failure classes the tools distinguish at the
/// process boundary: contract/shape violations are caller bugs, solver and
/// diagnostic errors are numerical, format/io errors concern files.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backward pass reached no trainable leaf (detached graph)")]
    DetachedGraph,

    #[error("linear solver failed: {reason} (condition estimate {condition:.3e})")]
    Solver { reason: String, condition: f64 },

    #[error("training diagnostic: {0}")]
    Diagnostic(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("system {system}: {source}")]
    InSystem {
        system: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep point {point}: {source}")]
    AtSweepPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn in_system(self, system: usize) -> Self {
        Error::InSystem { system, source: Box::new(self) }
    }

    /// True when the error stems from misuse of an API (bad shapes, violated
    /// preconditions, bad configuration) rather than from numerics or I/O.
    pub fn is_contract(&self) -> bool {
        match self {
            Error::Dimension(_) | Error::Contract(_) | Error::Config(_) | Error::Domain(_) => true,
            Error::InSystem { source, .. } | Error::AtSweepPoint { source, .. } => source.is_contract(),
            _ => false,
        }
    }
}
