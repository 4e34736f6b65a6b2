pub mod chain;
pub mod cli;
pub mod error;
pub mod eval;
pub mod excitation;
pub mod grad;
pub mod image;
pub mod model;
pub mod oracle;
pub mod saliency;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DType, Real, Tensor};
