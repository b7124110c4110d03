use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector has {found} components, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("sentence has a zero additive embedding")]
    ZeroEmbedding,
    #[error("all transport mass is zero")]
    DegenerateMarginals,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid dependency tree: {0}")]
    InvalidTree(String),
    #[error("invalid preprocessing setup: {0}")]
    InvalidSetup(String),
    #[error("statistic is undefined: {0}")]
    Undefined(&'static str),
    #[error("problem too large for exact solver: {0} cells (limit 25)")]
    TooLarge(usize),
}
