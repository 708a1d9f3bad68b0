//! Entanglement routing over pre-shared virtual graphs.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod overlay;
pub mod physics;
pub mod routing;
pub mod scenario;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
