//! Pipeline stages and run configuration behind the `drift` binary.

pub mod config;
pub mod pipeline;

pub use config::{EmbedderConfig, RunConfig};
pub use pipeline::{Pipeline, Workdir};
