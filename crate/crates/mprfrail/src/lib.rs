//! Command-line front end, file formats and parallel runners for `mprfrail-core`.

pub mod cli;
pub mod io;
pub mod parallel;
pub mod report;

pub use mprfrail_core as core;
