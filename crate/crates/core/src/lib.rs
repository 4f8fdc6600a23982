//! Emotion classification by reasoning over a graph of detected objects.
//!
//! Pipeline: detected objects become graph nodes, a residual GCN reasons
//! over their affinity, a scene-conditioned attention pools them, and a
//! linear classifier reads the scene and object features together.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod gcn;
pub mod graph;
pub mod ingestion;
pub(crate) mod io;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
