use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A malformed record in a text input. `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input")]
    Empty,

    #[error("class {0} empty")]
    EmptyClass(usize),

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exponent range {0:.1} exceeds the overflow guard")]
    ExpOverflow(f64),

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("non-finite {what} at epoch {epoch}")]
    Diverged { what: &'static str, epoch: usize },

    #[error("could not draw a batch with 2 or more classes after {0} attempts")]
    DegenerateBatch(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
