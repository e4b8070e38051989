use alloc::string::String;

use crate::tensor::Shape;

/// Errors raised by tensor kernels, the model builder and the training loop.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: {detail}")]
    Contract { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got {0}")]
    NonScalarLoss(Shape),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("no reference anchors for `{0}`")]
    MissingAnchor(String),
    #[error("non-finite loss at head {head}")]
    NonFiniteLoss { head: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}
