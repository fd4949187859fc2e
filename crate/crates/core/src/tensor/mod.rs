//! Dense `f64` tensors and a define-by-run gradient tape.

mod params;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;
