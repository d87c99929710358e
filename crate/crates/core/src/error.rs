use thiserror::Error;

use crate::partition::CellId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {index} has coordinate {axis} = {value}, outside [0, 1)")]
    OutOfDomain {
        index: usize,
        axis: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("depth {depth} exceeds the tree's maximum depth {max_depth}")]
    DepthExceeded { depth: u32, max_depth: u32 },

    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid subtree: {0}")]
    InvalidSubtree(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("gain of {cell} is undefined: statistics stop at depth {depth_cap}")]
    GainUndefined { cell: CellId, depth_cap: u32 },

    #[error("cell {0} is not a leaf of the quantizer")]
    UnknownLeaf(CellId),

    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),

    #[error("invalid rate schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cell {cell} is marked at the depth cap {depth_cap}; raise the cap")]
    CapTooSmall { cell: CellId, depth_cap: u32 },

    #[error("k = {k} must satisfy 1 <= k <= n = {n}")]
    InvalidK { k: usize, n: usize },

    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    #[error("invalid experiment configuration: {0}")]
    InvalidExperiment(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
