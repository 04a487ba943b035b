//! Batch driver: configuration parsing and command execution for `cokrig`.

pub mod config;
pub mod run;
