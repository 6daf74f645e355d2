pub mod analysis;
pub mod attnnorm;
pub mod data;
pub mod error;
pub mod fusion;
pub mod model;
pub mod numcore;
pub mod selection;
pub mod train;

pub use error::{Error, Result};
