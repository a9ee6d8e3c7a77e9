//! Std companion of `liberation-core`: Monte Carlo oracle, file formats, parallel maps,
//! verification suites and the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod mc;
pub mod parallel;
pub mod verify;

pub use error::{Error, Result};
