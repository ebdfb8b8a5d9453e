pub mod cli;
pub mod dynsys;
pub mod error;
pub mod idest;
pub mod models;
pub mod numcore;
pub mod render;
pub mod train;

pub use error::{Error, Result};
