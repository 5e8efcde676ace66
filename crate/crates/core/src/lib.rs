//! Trail difficulty classification from stacked accelerometer/gyroscope
//! windows.
//!
//! The pipeline runs [`ingest`] (parse, align, resample to 25 Hz) →
//! [`labeling`] (per-interval difficulty labels) → [`dataset`] (sliding
//! windows, split, class balancing) → [`nn`] (a small 2D CNN trained from
//! scratch) → [`training`] (Adam with early stopping, metrics). The
//! [`experiments`] module wires these into the window × kernel grid and a
//! synthetic data generator.

mod codec;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod labeling;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use labeling::DifficultyLabel;
