//! Library side of the `fallacy-forensics` binary, shared with its tests.

pub mod config;
pub mod pipeline;
