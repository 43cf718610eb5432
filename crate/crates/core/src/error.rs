use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes or lengths do not fit the operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A graph node received an input of the wrong shape, or declared
    /// parameters inconsistent with its dimensions.
    #[error("shape mismatch at node `{node}`: {detail}")]
    ShapeMismatch { node: String, detail: String },
    #[error("graph contains a cycle")]
    CyclicGraph,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    /// Input pixel values outside `[0, 1]`.
    #[error("value {value} at index {index} is outside [0, 1]")]
    Domain { index: usize, value: f32 },
    #[error("contrast level {0} is outside 1..=100")]
    InvalidLevel(u32),
    #[error("invalid contrast schedule: {0}")]
    InvalidSchedule(String),
    #[error("duplicate record for image `{image_id}` at level {level}")]
    DuplicateRecord { image_id: String, level: u8 },
    #[error("layer `{0}` has no valid off-diagonal cells")]
    NoValidCells(String),
    #[error("reference level {0} is not in the schedule")]
    ReferenceNotInSchedule(u8),
}
