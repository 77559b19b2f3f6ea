use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing dataset files under {root}: {}", missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingData { root: PathBuf, missing: Vec<PathBuf> },

    #[error("data integrity: {0}")]
    Integrity(String),

    #[error("parse error in {context}: {detail}")]
    Parse { context: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            detail: detail.to_string(),
        }
    }

    /// True for errors caused by bad data or missing inputs rather than math.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingData { .. } | Error::Integrity(_) | Error::Parse { .. } | Error::Io(_)
        )
    }

    /// True for non-finite values, divergence and failed numeric checks.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Domain { .. })
    }
}
