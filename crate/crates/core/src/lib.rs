pub mod alloc;
pub mod arch;
pub mod audio;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
