//! Command-line front end of the privacy pipeline: dataset files, model
//! files, run configuration and JSON reports around `genshield-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod store;

pub use error::{DataError, Error, Result};
