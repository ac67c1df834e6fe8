use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("center set is empty")]
    EmptyCenters,
    #[error("input point set is empty")]
    EmptyInput,
    #[error("duplicate center coordinates at index {0}")]
    DuplicateCenter(usize),
    #[error("brute-force enumeration over {distinct} distinct points exceeds cap {cap}; use local_search_kmedian instead")]
    CapExceeded { distinct: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite coordinate in point {0}")]
    NonFinite(u64),
    #[error("arrival out of order: expected {expected}, found {found}")]
    OutOfOrder { expected: u64, found: u64 },
    #[error("capacity exceeded: {0} points")]
    CapacityExceeded(u64),
    #[error("structure is empty")]
    EmptyState,
    #[error("unknown region id {0}")]
    UnknownRegion(u64),
    #[error("coreset cost is nonzero while the full cost is zero")]
    ZeroReferenceCost,
    #[error("dimension {0} exceeds the grid construction limit of 4")]
    GridDimension(usize),
    #[error("csv error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
