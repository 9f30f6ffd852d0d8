//! Glance-supervised video anomaly detection toolkit.

// Numeric kernels index several parallel buffers per position.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod events;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pseudo_label;
pub mod sampler;
pub mod scorer;
pub mod synth;
pub mod types;

pub use config::PipelineConfig;
pub use error::{Result, VadError};
