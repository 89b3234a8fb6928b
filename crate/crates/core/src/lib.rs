//! Least-squares moment matching for single-input single-output linear systems.

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod error;
pub mod format;
pub mod generator;
pub mod linalg;
pub mod moments;
pub mod random;
pub mod reduction;
pub mod statespace;
pub mod sylvester;

pub use error::{Error, Result};
