//! File formats, a benchmark runner and the `rots` command-line tool on top
//! of [`rots_core`].

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{Result, RotsError};
