//! Dense tensors, a reverse-mode tape, Adam and the binary checkpoint format.

mod adam;
pub mod checkpoint;
mod kernels;
mod param;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tape::{Tape, Var, PROB_EPS};
pub use tensor::Tensor;
