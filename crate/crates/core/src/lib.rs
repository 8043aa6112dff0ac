//! Building blocks for a small anchor-free object detector, each operator
//! paired with a hand-derived backward pass so it can be checked against
//! finite differences.

pub mod blocks;
pub mod cost;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod ops;
pub mod params;
pub mod postprocess;
pub mod ppm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::Parameters;
pub use tensor::Tensor;
