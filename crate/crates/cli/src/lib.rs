//! Library side of the `mrh` command-line tool: track CSV ingestion,
//! simulation output, density-curve export and fit reports.

pub mod density;
pub mod error;
pub mod report;
pub mod track_io;

pub use error::{CliError, Result};
