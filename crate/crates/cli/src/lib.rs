//! Configuration and serialization layer for the `thermophase` binary.

pub mod config;
pub mod output;
