pub mod chaos;
pub mod coupling;
pub mod error;
pub mod fastmath;
pub mod fft2;
pub mod kernels;
pub mod mollifier;
pub mod noise;
pub mod quad;
pub mod sim;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
