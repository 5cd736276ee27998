//! Minimal dense tensor engine used by the paraphrase model.
//!
//! * [`Tensor`] is row-major `f32`/`f64` storage with eager kernels.
//! * [`Tape`] records operations and replays them in reverse with [`backward`].
//! * [`adam_step`] and [`clip_global_norm`] for optimization.
//! * [`grad_check`] for central-difference verification of the tape.

mod error;
mod gradcheck;
mod grads;
mod optim;
mod tape;
mod tensor;

pub use error::{NumError, Result};
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPS};
pub use grads::{clip_global_norm, GradientSet};
pub use optim::{adam_step, AdamConfig, AdamState, Parameters};
pub use tape::{backward, Tape, Var};
pub use tensor::{
    apply_unary, dot, log_softmax_into, matmul, sigmoid, softmax_into, softmax_rows, DType, Scalar,
    Tensor, UnaryOp,
};
