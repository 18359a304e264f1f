//! Failure classes and their exit codes.

use std::fmt;

use gammadyn_core::Error as CoreError;

#[derive(Debug)]
pub enum Failure {
    /// Malformed or out-of-range configuration (exit 2).
    Config(String),
    /// A hypothesis flag does not hold (exit 3); `tag` names the inequality.
    Precondition { tag: String, detail: String },
    /// A check ran and failed (exit 1).
    Assertion(String),
    /// IO or numerical breakdown (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Precondition { .. } => 3,
            Failure::Assertion(_) | Failure::Runtime(_) => 1,
        }
    }

    pub fn precondition(tag: &str, detail: impl Into<String>) -> Self {
        Failure::Precondition { tag: tag.into(), detail: detail.into() }
    }

    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Precondition { tag, detail } => Failure::precondition(tag, detail),
            CoreError::Grid(_) | CoreError::Parameter(_) | CoreError::NMaxMismatch(..) | CoreError::Overlap(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Precondition { tag, detail } => write!(f, "{tag}: {detail}"),
            Failure::Assertion(m) => write!(f, "check failed: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::from_core(e)
    }
}
