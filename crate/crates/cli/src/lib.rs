//! Command implementations behind the `lexattn` binary.

pub mod commands;
pub mod config;
