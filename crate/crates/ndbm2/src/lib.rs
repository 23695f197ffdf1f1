//! Std companion to `ndbm2-core`: versioned weight serialization, the
//! wall-clock benchmark harness, report formatting, and threaded forward
//! execution. The `ndbm2` binary exposes all of it on the command line.

pub mod bench;
pub mod exec;
pub mod format;
pub mod report;

pub use format::{load, save, FormatError};
