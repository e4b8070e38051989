//! File formats and commands around [`mssnet_core`]: PNG images, weight
//! archives, run configs, paired datasets and the `mssnet` subcommands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod image_io;
pub mod weights;

pub use error::{CliError, Result};
