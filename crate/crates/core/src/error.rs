use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("invalid sweep schedule: {0}")]
    Schedule(String),

    #[error("cannot estimate from an empty sample batch")]
    EmptyBatch,

    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("eigensolver failed to converge: {0}")]
    EigenConvergence(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("non-finite energy estimate at sweep {sweep}, iteration {iteration}")]
    NonFiniteEnergy { sweep: usize, iteration: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed trace file: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
