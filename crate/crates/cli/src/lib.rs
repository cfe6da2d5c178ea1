//! Pipeline orchestration for evigraph: configuration, the stages from
//! ingest to evaluation, and the interpretability report.

pub mod config;
pub mod error;
pub mod explain;
pub mod pipeline;

pub use config::{AugmentationSettings, PipelineConfig, ProviderSpec};
pub use error::{ErrorKind, PipelineError};
pub use explain::{explain_graph, ExplainReport, ExplainRow};
pub use pipeline::{run_pipeline, RunSummary, Split};
