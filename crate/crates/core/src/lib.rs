pub mod accuracy;
pub mod bands;
pub mod cart;
pub mod error;
pub mod forest;
pub mod fusion;
pub mod pipeline;
pub mod raster;
pub mod rotation;
pub mod seed;
pub mod synthetic;
pub mod texture;

pub use error::{Error, Result};
