use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("ordering error at line {line}: {msg}")]
    Ordering { line: usize, msg: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("day {day}: {source}")]
    AtDay {
        day: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("singular design: {0}")]
    Singular(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// A copy of the error for reporting one failure in several places. I/O
    /// errors keep their kind and message.
    pub fn duplicate(&self) -> Error {
        match self {
            Error::Parse { line, msg } => Error::Parse { line: *line, msg: msg.clone() },
            Error::Ordering { line, msg } => Error::Ordering { line: *line, msg: msg.clone() },
            Error::InsufficientData(m) => Error::InsufficientData(m.clone()),
            Error::Numeric(m) => Error::Numeric(m.clone()),
            Error::Domain(m) => Error::Domain(m.clone()),
            Error::AtDay { day, source } => Error::AtDay { day: *day, source: Box::new(source.duplicate()) },
            Error::Singular(m) => Error::Singular(m.clone()),
            Error::Optimization(m) => Error::Optimization(m.clone()),
            Error::Config(m) => Error::Config(m.clone()),
            Error::Alignment(m) => Error::Alignment(m.clone()),
            Error::Internal(m) => Error::Internal(m.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
