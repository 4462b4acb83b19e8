//! Experiment harness behind the `locdep` binary: configuration resolution,
//! the grid-replicate experiment driver, rate fitting, and deterministic
//! table serialization. Lives in a library so integration tests can drive
//! whole experiments in-process.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod fit;
