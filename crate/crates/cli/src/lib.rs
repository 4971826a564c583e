//! Experiment harness for coded color-mask light field imaging: synthetic
//! scenes, dataset ingestion, versioned configs, the simulate → reconstruct
//! → evaluate pipeline, the cross-mask generalization matrix, and figures.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod render;

pub use config::{DispSource, ExperimentConfig, Method, CONFIG_VERSION};
pub use dataset::{
    export_dataset, ingest_dataset, load_lightfield, Dataset, DatasetManifest, NamedField,
};
pub use error::{CliError, Result};
pub use pipeline::{run_cross_mask, run_pipeline, PipelineOutput};
