use thiserror::Error;

/// Errors raised by tensor operations, layers, the optimizer and checkpoint IO.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: dimension mismatch on axis {axis} (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        axis: usize,
        expected: usize,
        found: usize,
    },
    #[error("{op}: axis of length zero")]
    EmptyAxis { op: &'static str },
    #[error("{op}: every position is masked")]
    DegenerateMask { op: &'static str },
    #[error("{op}: id {id} is out of range for a table of {size} rows")]
    Vocabulary {
        op: &'static str,
        id: usize,
        size: usize,
    },
    #[error("sequence of length {len} exceeds the {max} supported positions")]
    TooLong { len: usize, max: usize },
    #[error("{op}: empty sequence")]
    EmptySequence { op: &'static str },
    #[error("target {target} at position {position} is not below the class count {classes}")]
    Label {
        target: usize,
        position: usize,
        classes: usize,
    },
    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
