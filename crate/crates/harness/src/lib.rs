//! Experiment harness: configuration, training runs, recipes and exports.

pub mod config;
pub mod error;
pub mod model;
pub mod recipes;
pub mod records;
pub mod train;

pub use error::{HarnessError, Result};
