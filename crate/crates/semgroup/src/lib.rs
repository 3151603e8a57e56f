//! Files, reports and the command-line front end for `semgroup-core`.

pub mod commands;
pub mod config;
pub mod report;
pub mod stream_io;

pub use commands::{cmd_eval, cmd_generate, cmd_run, Overrides};
pub use config::RunConfig;
