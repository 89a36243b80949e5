pub mod darcy;
pub mod dataset;
pub mod evaluation;
pub mod interpret;
pub mod error;
pub mod kernel;
pub mod model;
pub mod randfield;
pub mod trainer;
pub mod tensor;

pub use error::{Error, Result};
pub use kernel::KernelMatrix;
pub use tensor::Tensor;
