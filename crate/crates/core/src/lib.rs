pub mod backdoor;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Classifier, Mode, ModelConfig};
pub use tensor::{Scalar, Tensor, TensorF};
