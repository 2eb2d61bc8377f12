//! Small reverse-mode automatic differentiation engine over rank 1–3 `f64`
//! tensors, with the 1-D sequence operators needed by the sleep model.
//!
//! Sequences are laid out channels × time. Batches are a single record, so
//! there is no batch axis.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod tensor;
mod var;

pub use error::{Result, TensorError};
pub use tensor::Tensor;
pub use var::{BackwardFn, Var};
