//! Experiment runner for `shuffle-rl`: config loading, training and
//! comparison runs, and SVG plots of the resulting metrics.

pub mod compare;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;

pub use error::{CliError, Result};
