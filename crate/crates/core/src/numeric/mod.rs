//! Dense tensors, reverse-mode differentiation and training utilities.

use alloc::string::String;
use alloc::vec::Vec;

mod exact;
mod graph;
pub mod gradcheck;
pub mod nn;
mod optim;
mod params;
mod tensor;

pub use exact::{exact_sum, ExactSum};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{sigmoid, Axis, Grads, Graph, Precision, Var};
pub use optim::{lr_at_step, Adam, AdamConfig, TrainConfig};
pub use params::{join, join_idx, Init, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("dimension error: {0}")]
    Dimension(&'static str),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("function evaluation failed or was non-finite")]
    Evaluation,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}
