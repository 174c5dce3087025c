use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown model identifier '{0}'")]
    UnknownModel(String),

    #[error("invalid dynamics chain '{chain}': {reason}")]
    InvalidChain { chain: String, reason: String },

    #[error("chain '{0}' is not part of the dispatch set; add it to the kernel's model list")]
    MissingModel(String),

    #[error("chain '{0}' has no registered conversion policy")]
    NoPolicy(String),

    #[error("region {lo:?}..{hi:?} exceeds lattice extents {dims:?}")]
    OutOfRange {
        lo: [usize; 3],
        hi: [usize; 3],
        dims: [usize; 3],
    },

    #[error("degenerate cell: density {0} is not positive")]
    DegenerateCell(f64),

    #[error("cannot split {extent} cells into {parts} blocks along axis {axis}")]
    ImpossibleSplit { axis: usize, extent: usize, parts: usize },

    #[error("exchange buffer size mismatch: expected {expected} bytes, got {actual}")]
    BufferSize { expected: usize, actual: usize },

    #[error("exchange protocol violation: {0}")]
    Protocol(String),

    #[error("relaxation rate {0} outside the stable interval (0, 2)")]
    UnstableOmega(f64),

    #[error("{0}")]
    Undefined(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
