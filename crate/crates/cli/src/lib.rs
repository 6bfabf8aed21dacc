//! Experiment runner library behind the `dwrl` binary.

pub mod experiments;
pub mod expert;
pub mod manifest;
pub mod runner;
pub mod stats;
pub mod svg;
