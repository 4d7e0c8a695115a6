//! File formats, run directories and the command line around `furl-core`.

pub mod audit;
pub mod checkpoint;
pub mod error;
pub mod runner;
pub mod settings;
pub mod sink;
pub mod sweep;

pub use error::{LabError, Result};
