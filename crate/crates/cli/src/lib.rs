//! File formats, configuration and the command layer for `mmfuse`.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod history;
pub mod model_io;
pub mod pipeline;
pub mod sweep;

pub use error::{CliError, Result};
