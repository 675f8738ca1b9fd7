//! File formats, checkpoints, run artifacts and the `hgt` command line on
//! top of `hgt-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod outputs;

pub use checkpoint::Checkpoint;
pub use config::{Overrides, RunConfig};
pub use error::{Error, Result};
