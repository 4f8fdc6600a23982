//! Loading detections, embeddings and scene features; building samples;
//! splitting; synthetic data.

mod dataset;
mod embeddings;
mod records;
mod synthetic;

pub use dataset::{
    build_samples, kfold_indices, split_dataset, BuildOptions, DatasetConfig, Sample, Split,
};
pub use embeddings::{embed_concepts, EmbeddingTable, Lookup};
pub use records::{
    load_detections, load_scenes, parse_detections, parse_scenes, write_detections, write_scenes,
    DetectionRecord, ObjectSlot, SceneRecord, PAD_CONCEPT,
};
pub use synthetic::{generate_synthetic, PlantedRule, SyntheticConfig, SyntheticDataset};
