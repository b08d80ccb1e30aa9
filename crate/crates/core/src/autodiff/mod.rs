//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Tensors are immutable values. Differentiable computations are recorded on
//! a [`Tape`]; every recorded operation refers to earlier entries only, so a
//! single reverse sweep visits each operation once.

mod gradcheck;
pub mod ops;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck, GradCheckReport};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tape::{Reduction, Tape, Var};
pub use tensor::Tensor;
