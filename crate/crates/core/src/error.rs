use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One violated standing assumption of a plant or chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based mode (or row) index, when the violation is local to one.
    pub mode: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn at(mode: usize, message: impl Into<String>) -> Self {
        Self {
            mode: Some(mode),
            message: message.into(),
        }
    }

    pub fn global(message: impl Into<String>) -> Self {
        Self {
            mode: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assumption violated: {}", join_violations(.0))]
    Assumptions(Vec<Violation>),

    #[error("{what} numerically singular at t={t}, mode {mode} (condition estimate {condition:.3e})")]
    Singular {
        what: &'static str,
        t: usize,
        mode: usize,
        condition: f64,
    },

    #[error("exact enumeration needs {paths} paths, above the limit of {limit}")]
    TooLarge { paths: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl fmt::Display,
        found: impl fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
