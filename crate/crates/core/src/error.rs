use thiserror::Error;

/// Errors surfaced by the engine, the harness and the config parser.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed user-supplied value (decimal text, out-of-domain real).
    #[error("invalid input: {0}")]
    Input(String),

    /// A parameter combination the engine refuses to run.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (mismatched lengths, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The operation does not apply to the given algorithm or trace.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An internal consistency check failed. Always a bug.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
