//! Reverse-mode tensor engine and the placement-scoring network.

mod model;
mod tape;

pub use model::{Ablation, GraphInputs, LossEval, Model, ModelConfig, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use tape::{Gradients, Incidence, Scalar, Tape, Tensor, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("backward called without a recorded forward pass")]
    NoTape,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("weight file error: {0}")]
    WeightFormat(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
