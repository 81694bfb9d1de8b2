use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("empty sequence passed to {0}")]
    EmptySequence(&'static str),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("missing tensor `{0}` in checkpoint")]
    MissingTensor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
