pub mod backbone;
pub mod data;
pub mod deco;
pub mod error;
pub mod maps;
pub mod nn;
pub mod pipeline;
pub mod raster;

pub use error::{Error, Result};
