//! Error types shared across the crate.
//!
//! Variants map onto the CLI exit codes: configuration problems (2), data
//! integrity and parse failures (3), transport exhaustion (4), everything
//! else (5).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad keys, missing files, out-of-range values).
    #[error("config error: {0}")]
    Config(String),

    /// A data file failed to parse; `location` names the offending row/item.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Cross-reference or invariant violation in loaded data.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A referenced id or node does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// An operation received arguments outside its contract.
    #[error("validation error: {0}")]
    Validation(String),

    /// The model endpoint stayed unreachable after the retry budget.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// Every vote for a pair failed to parse; recorded per pair, not fatal
    /// to a batch.
    #[error("classification error for pair ({anchor_id}, {candidate_id}): {message}")]
    Classification {
        anchor_id: String,
        candidate_id: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Anything that does not fit the categories above.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Prefix the error message with a stage or file context, preserving the
    /// variant (and therefore the exit code).
    pub fn with_context(self, ctx: &str) -> Error {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Parse { location, message } => Error::Parse {
                location,
                message: format!("{ctx}: {message}"),
            },
            Error::Integrity(m) => Error::Integrity(format!("{ctx}: {m}")),
            Error::Lookup(m) => Error::Lookup(format!("{ctx}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
            Error::Transport { attempts, message } => Error::Transport {
                attempts,
                message: format!("{ctx}: {message}"),
            },
            Error::Classification {
                anchor_id,
                candidate_id,
                message,
            } => Error::Classification {
                anchor_id,
                candidate_id,
                message: format!("{ctx}: {message}"),
            },
            Error::Io(e) => Error::Internal(format!("{ctx}: {e}")),
            Error::Internal(m) => Error::Internal(format!("{ctx}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_preserves_the_variant() {
        let e = Error::Parse {
            location: "f:row 2".into(),
            message: "bad".into(),
        }
        .with_context("ingest");
        match e {
            Error::Parse { location, message } => {
                assert_eq!(location, "f:row 2");
                assert!(message.starts_with("ingest:"));
            }
            other => panic!("variant changed: {other:?}"),
        }
        assert!(matches!(
            Error::Config("x".into()).with_context("c"),
            Error::Config(_)
        ));
        assert!(matches!(
            Error::Transport {
                attempts: 3,
                message: "x".into()
            }
            .with_context("c"),
            Error::Transport { attempts: 3, .. }
        ));
        // IO errors lose their source when wrapped; they become internal.
        let io = Error::Io(std::io::Error::other("boom"));
        assert!(matches!(io.with_context("c"), Error::Internal(_)));
    }
}
