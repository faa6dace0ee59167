use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid model config at layer `{layer}`: {reason}")]
    ModelConfig { layer: String, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("activation tape already consumed; rerun forward before backward")]
    StaleTape,

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("encoder snapshot layer {index}: shape mismatch")]
    SnapshotShape { index: usize },

    #[error("round numbers must increase by one: got {got} after {previous}")]
    NonMonotoneRound { previous: u32, got: u32 },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
