//! Pipeline stages, `thma run` and the review HTTP API on top of `thma-core`.

pub mod config;
pub mod run;
pub mod server;
pub mod stages;

pub use config::PipelineConfig;
pub use run::{run_pipeline, RunReport};
