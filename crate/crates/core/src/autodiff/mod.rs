//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records each op as it runs; [`Tape::backward`] then walks the
//! records in reverse. Tapes are single-threaded; parallel workers build
//! their own.

mod check;
mod params;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckReport};
pub use params::{read_checkpoint, write_checkpoint, ParamStore};
pub use tape::{log_sigmoid, sigmoid, Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
