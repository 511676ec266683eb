//! File formats, dataset and checkpoint directories, and the command-line
//! workflows built on `babynet-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod dataset;
mod error;
pub mod report;
pub mod tensor_io;

pub use error::{Error, Result, EXIT_NUMERIC, EXIT_USAGE};
