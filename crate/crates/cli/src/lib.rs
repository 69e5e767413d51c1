//! Library surface of the pipeline CLI, kept separate from the binary so
//! integration tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod context;
pub mod geojson_out;
pub mod logging;

pub use config::{Overrides, RunConfig};
pub use context::RunContext;
