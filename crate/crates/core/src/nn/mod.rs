//! Minimal dense NN core: tensors, MLPs with explicit backward caches,
//! Adam with decoupled weight decay, cyclic learning rates, and gradient
//! checking.

pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use mlp::{init_mlp, init_params, DenseLayer, MlpCache, MlpParams, MlpSpec};
pub use optim::{AdamConfig, AdamState, CyclicLrSchedule, MomentPair};
pub use tensor::Tensor2;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("cache does not match these parameters")]
    StaleCache,
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("invalid MLP spec {widths:?}: need at least input and output widths, all positive")]
    InvalidSpec { widths: Vec<usize> },
}
