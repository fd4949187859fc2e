pub mod corpus;
pub mod error;
pub mod infer;
pub mod model;
pub mod rouge;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
