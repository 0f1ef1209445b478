//! Driver library behind the `progspace` binary: run configuration, the
//! stage pipeline, and the SVG figure emitters.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
