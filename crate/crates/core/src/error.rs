use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A referenced kind, property, mechanism, instance or function does not exist.
    #[error("unresolved reference: {0}")]
    Reference(String),
    /// A caller broke an operation's contract (arity, shape, value kind, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("schedule contains a cycle through mechanisms {0:?}")]
    Cycle(Vec<usize>),
    #[error("decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("mechanism {mechanism} failed: {reason}")]
    Step { mechanism: usize, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("load error at row {row}: {reason}")]
    Load { row: usize, reason: String },
    #[error("policy error: {0}")]
    Policy(String),
    #[error("training diverged for agent {agent}: {reason}")]
    Training { agent: usize, reason: String },
    #[error("environment fault: {0}")]
    Env(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Load { row, reason: e.to_string() }
    }
}
