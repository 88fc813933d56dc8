//! Reverse-mode differentiation over small dense matrices, plus the
//! network layers, optimizer and gradient oracle built on top of it.

mod adam;
mod fd;
mod init;
mod nn;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use fd::{finite_diff_grad, max_rel_error};
pub use init::{init_segment, InitScheme};
pub use nn::{dropout, lstm_forward, mlp_forward, LstmOutput, LstmSpec, MlpSpec};
pub use params::{ParamVector, Segment};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
