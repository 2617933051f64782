//! Standard-library side of kbbm: configuration files, the command line,
//! CSV/JSON output and thread-pool fan-out around [`kbbm_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;
