//! Sketch-to-TikZ generation pipeline, benchmark dataset builder and
//! evaluation metrics.

pub mod agent;
pub mod code;
pub mod config;
pub mod dataset;
pub mod eval;
mod gate;
pub mod metrics;
pub mod orchestrator;
pub mod report;
pub mod verify;
pub mod sidecar;
