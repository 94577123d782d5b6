pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{matmul, sample_normal, Rng, Shape4, Tensor};
