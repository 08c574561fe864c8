//! Minimal dense tensor kernel: row-major `f64` tensors, a reverse-mode
//! autodiff tape and Adam.

mod adam;
pub(crate) mod gemm;
mod tape;
mod tensor;

pub use adam::{clip_grad_norm, AdamState};
pub use tape::{Segment, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
