//! Library surface of the command-line tool: configuration schema,
//! deterministic initialization, and run manifests. The binary in `main.rs`
//! is a thin dispatcher over these plus the core crate.

pub mod config;
pub mod init;
pub mod manifest;
