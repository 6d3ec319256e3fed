//! Dense/sparse matrix compute with reverse-mode gradients, an Adam
//! optimizer and the graph propagation operators.

mod optim;
mod propagation;
mod sparse;
mod tape;
mod tensor;

use thiserror::Error;

pub use optim::Adam;
pub use propagation::{build_propagation_matrices, PropagationOperators};
pub use sparse::SparseMatrix;
pub use tape::{dropout_mask, softmax_rows, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{len} values cannot fill a {rows}x{cols} tensor")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("loss mask selects no nodes")]
    EmptyMask,
    #[error("mask index {0} is out of range")]
    MaskOutOfRange(usize),
    #[error("label {0} has no matching logit column")]
    LabelOutOfRange(u8),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("variable is not recorded on this tape (backward before forward?)")]
    UnknownVar,
    #[error("gradient for parameter {0} is not finite")]
    NanGradient(usize),
    #[error("optimizer got {params} parameters but {grads} gradients/moments")]
    ParamCount { params: usize, grads: usize },
}
