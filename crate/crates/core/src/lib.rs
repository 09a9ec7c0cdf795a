//! Hierarchical trace-learning network for transform-invariant recognition.

pub mod cli;
pub mod config;
pub mod error;
pub mod frontend;
pub mod image;
pub mod ingest;
pub mod learning;
pub mod network;
pub mod readout;
pub mod symmetry;

pub use error::{Error, Result};
pub use image::Image;
