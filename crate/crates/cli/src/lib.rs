//! Library surface behind the `genrec` binary: run configuration,
//! checkpoint persistence, and the pipeline commands.

pub mod checkpoint;
pub mod commands;
pub mod config;

pub use config::RunConfig;
