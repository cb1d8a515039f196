pub mod bitlin;
pub mod condenser;
pub mod distmodel;
pub mod error;
pub mod hadamard;
pub mod harness;
pub mod metricopt;
pub mod predictor;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Exact, Scalar};
