use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: time `{value}` is not numeric")]
    NonNumericTime { line: u64, value: String },

    #[error("line {line}: time {value} is negative")]
    NegativeTime { line: u64, value: f64 },

    #[error("line {line}: time {value} is not finite")]
    NonFiniteTime { line: u64, value: f64 },

    #[error("line {line}: status `{value}` is not 0 or 1")]
    InvalidStatus { line: u64, value: String },

    #[error("fewer than 2 groups ({0} found)")]
    TooFewGroups(usize),

    #[error("dataset is empty")]
    Empty,

    #[error("dataset has no observed events")]
    NoEvents,

    #[error("{method} requires exactly 2 groups, dataset has {groups}")]
    RequiresTwoGroups { method: &'static str, groups: usize },

    #[error("matrix is not positive semidefinite")]
    NotPositiveSemidefinite,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
