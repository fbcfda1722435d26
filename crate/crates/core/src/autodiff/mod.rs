//! Minimal dense tensors with reverse-mode automatic differentiation.
//!
//! Only the operations the classifier needs are provided: matrix products,
//! element-wise arithmetic and activations, last-axis concatenation, sequence
//! stacking, row gathers, masked softmax, attention pooling and a fused
//! softmax cross-entropy.

mod tape;
mod tensor;

pub use tape::{stack_steps, weighted_pool, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
