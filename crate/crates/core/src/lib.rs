pub mod attribution;
pub mod data;
pub mod dialectics;
pub mod error;
pub mod fidelity;
pub mod fixtures;
pub mod gaf;
pub mod instances;
pub mod nn;
pub mod render;
pub mod scalar;
pub mod strata;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = nn::NeuralGraph<f64>;
pub type Network32 = nn::NeuralGraph<f32>;
