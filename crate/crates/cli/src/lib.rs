//! Batch driver for the chaosfem engine: configuration, stage pipeline and
//! on-disk artifacts.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;

pub use commands::Run;
pub use config::Config;
pub use pipeline::{ErrorKind, StageError};
