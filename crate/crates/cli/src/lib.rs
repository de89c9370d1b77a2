//! Command implementations and the bundle server behind the `fbcv` binary.

pub mod commands;
pub mod server;
