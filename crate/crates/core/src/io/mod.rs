//! Reading input tables, preprocessing, manifests and output tables.

mod ingest;
pub mod kv;
mod manifest;
mod preprocess;
pub mod tables;

pub use ingest::{ingest, IngestReport, InputPaths};
pub use manifest::{HyperSettings, RunManifest};
pub use preprocess::{preprocess, PreprocessLog, PreprocessOptions};
