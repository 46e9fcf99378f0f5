use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("singular {what} at {location}")]
    Singular { what: &'static str, location: String },

    #[error("eigensolver did not converge for matrix {matrix}")]
    EigenSolver { matrix: String },

    #[error("order parameter undefined: {0}")]
    Undefined(String),

    #[error("no dip trajectory found in field window {h_min} Oe .. {h_max} Oe")]
    NoDipTrajectory { h_min: f64, h_max: f64 },

    #[error("fit needs phase data but the spectrum is magnitude-only")]
    PhaseRequired,

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

/// A failure to ingest a file, with the 1-based line (or CSV row) when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub source_name: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ParseError {
    pub fn new(source_name: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.source_name, line, self.message),
            None => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ParseError {}
