//! Configuration, file formats and experiment drivers behind the `hartree`
//! binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod snapshot;
