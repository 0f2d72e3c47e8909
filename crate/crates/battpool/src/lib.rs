//! File formats, study configuration and the command-line front end for
//! [`battpool_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod study;

pub use error::{CliError, Result};
