//! File formats, configuration, parallel Monte Carlo and reporting on top of
//! [`walsh_core`]. The `walsh` binary is a thin command layer over this crate.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod plot;
pub mod problem_file;
pub mod reports;
pub mod solution_io;
pub mod testfn_file;

pub use error::{FileError, FileResult};
