//! Reverse-mode automatic differentiation over `f64` tensors, with the
//! layers, losses and optimizer used by the trajectory VAE.
//!
//! A [`Tape`] records every operation; [`Tape::backward`] returns gradients
//! for all nodes that descend from trainable leaves. Model weights live in a
//! [`ParameterStore`] and are put on a fresh tape each step with
//! [`ParameterStore::bind`].

pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{gradient_check, gradient_check_store, GradCheck};
pub use params::{AdamConfig, Bound, ParameterStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("parameter {0} has no gradient")]
    MissingGradient(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("parameter {0} already registered")]
    DuplicateParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl NnError {
    pub fn shape(op: &'static str, detail: String) -> Self {
        Self::ShapeMismatch { op, detail }
    }
}
