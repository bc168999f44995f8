//! Command-line tools, file formats and experiment orchestration on top of
//! `extremis-core`.

pub mod cli;
pub mod config;
pub mod exec;
pub mod experiment;
pub mod io;
