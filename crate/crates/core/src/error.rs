use std::fmt;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("parse error at line {line}, byte offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} needs about {required:.3e} work units, budget is {budget} (cycle count {count})")]
    BudgetExceeded {
        what: &'static str,
        required: f64,
        budget: u64,
        count: String,
    },

    #[error("{0}")]
    NoSignal(&'static str),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("domain error{}: {message}", DisplayK(*.k))]
    Domain { message: String, k: Option<usize> },

    #[error("undefined diagnostic: {0}")]
    Undefined(&'static str),

    #[error("{what} limited to {limit}, got {actual}")]
    LimitExceeded {
        what: &'static str,
        limit: usize,
        actual: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

struct DisplayK(Option<usize>);

impl fmt::Display for DisplayK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(k) => write!(f, " at k = {k}"),
            None => Ok(()),
        }
    }
}

impl Error {
    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    pub(crate) fn parse(line: usize, offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn domain(msg: impl Into<String>, k: Option<usize>) -> Self {
        Error::Domain {
            message: msg.into(),
            k,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
