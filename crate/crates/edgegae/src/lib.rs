//! File formats, threading and the command-line tool around `edgegae-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;

pub use edgegae_core as core;
pub use error::{Error, Result};
