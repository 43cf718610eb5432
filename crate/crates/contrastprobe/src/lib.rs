//! File formats, dataset ingestion, sweeps and reports on top of
//! [`contrastprobe_core`].

pub mod cpm;
pub mod dataset;
pub mod image;
pub mod report;
pub mod sweep;
pub mod synthetic;

pub use contrastprobe_core as core;
