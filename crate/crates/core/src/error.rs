use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("coverage error: pixel ({row}, {col}) is not covered by any patch")]
    Coverage { row: usize, col: usize },
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),
    #[error("data corruption: {0}")]
    DataCorruption(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}
