//! Configuration files, CSV output, run manifests and built-in presets.

pub mod config;
pub mod csv;
pub mod manifest;
pub mod presets;

pub use config::{Config, Experiment};
pub use manifest::Manifest;
