use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item {item} outside universe [1, {n}]")]
    ItemOutOfRange { item: u64, n: u64 },

    #[error("stream mode violation: {0}")]
    Mode(String),

    #[error("stream order contract: {0}")]
    Order(String),

    #[error("operation {op} not allowed in phase {phase}")]
    Phase { op: &'static str, phase: &'static str },

    #[error("report requested before finalize")]
    NotFinalized,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing repetition {0} in level reports")]
    MissingRepetition(usize),

    #[error("no sampling level within scan range for level {0}")]
    LevelScan(u32),

    #[error("pass consistency: {0}")]
    Consistency(String),

    #[error("candidate set holds {found} items, capacity is {capacity}")]
    CandidateOverflow { found: usize, capacity: usize },

    #[error("sketch merge: {0}")]
    Merge(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("generation: {0}")]
    Generation(String),

    #[error("infeasible at this scale: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors that come from a violated input contract rather than a bug or I/O problem.
    pub fn is_contract(&self) -> bool {
        matches!(
            self,
            Error::Mode(_) | Error::Order(_) | Error::Infeasible(_) | Error::CandidateOverflow { .. }
        )
    }
}
