//! Experiment configuration, datasets on disk, and the evaluation commands.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod manifest;
pub mod pgm;

pub use config::{DenoiserChoice, ExperimentConfig, Preset, SweepAxis};
pub use dataset::{generate_dataset, read_dataset, Dataset, Record, Split};
pub use experiment::{
    cmd_evaluate, cmd_generate_dataset, cmd_sweep, cmd_train, evaluate, Evaluation, MetricRow, SampleRow,
};
pub use manifest::{OutputDir, RunManifest};
