//! Semi-supervised image-to-image translation between a single content
//! image and a single style image.
pub mod checkpoint;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod image_io;
pub mod losses;
pub mod matting;
pub mod networks;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub use error::{Error, Result};
