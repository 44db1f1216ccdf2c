use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("mask has no voxels")]
    EmptyMask,
    #[error("mask has {dims} dimensions but a {requested}-D kernel was requested")]
    DimensionMismatch { dims: usize, requested: usize },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("voxel index {index} out of range (N = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("non-finite data at voxel {voxel}, time {time}")]
    NonFiniteData { voxel: usize, time: usize },
    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },
    #[error("parameter state is invalid (non-positive precision)")]
    InvalidState,
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("too few draws: need at least {needed}, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("Moran's I undefined (zero variance)")]
    ZeroVariance,
    #[error("replicate sets do not match: {0}")]
    Mismatch(String),
    #[error("{0} is required but missing")]
    Missing(&'static str),
}
