//! Reverse-mode automatic differentiation, the Adam optimizer and the parameter
//! checkpoint container.

mod adam;
mod container;
mod tape;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use container::{read_container, write_container, Container, ContainerError, NamedTensor};
pub use tape::{gaussian_logpdf, Gradients, Shape, Tape, Tensor, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("domain violation in {op}: operand {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: Shape },
    #[error("{op} needs at least one operand")]
    Empty { op: &'static str },
}
