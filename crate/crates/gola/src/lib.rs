//! Benchmark generators, file formats, reports and the command-line driver
//! around [`gola_core`].

pub mod cli;
pub mod pdedata;
pub mod persist;
pub mod report;

pub use gola_core;
