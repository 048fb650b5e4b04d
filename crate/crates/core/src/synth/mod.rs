//! Synthetic DEX/APK fixtures with known obfuscation characteristics.
//!
//! A [`GenerationProfile`] fixes the name, string and instruction
//! distributions of one app. [`generate_app`] turns it into DEX bytes together
//! with the symbol table the extractor is expected to recover, and
//! [`build_labeled_corpus`] writes whole labelled corpora to disk.

pub mod builder;
mod generator;
mod labeled;
mod names;
mod profile;

use thiserror::Error;

pub use generator::{generate_app, generate_dex, write_apk, GeneratedApp};
pub use labeled::{
    build_labeled_corpus, extract_labeled_features, read_labels, CellSpec, CorpusConfig,
    LabelRecord, LabeledCorpus, MetadataConfig, ProfileOverrides, APK_DIR, LABELS_FILE,
    MANIFEST_FILE,
};
pub use profile::{
    apply_technique_profile, apply_technique_profile_with, GenerationProfile, InstructionMix,
    LengthWeights, ProfileLabel, StringProfile, TechniqueTransform, ToolStyle,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible profile: {0}")]
    ProfileInfeasible(String),
    #[error("corpus config has no cells")]
    EmptyConfig,
    #[error(transparent)]
    Build(#[from] builder::BuildError),
    #[error("archive: {0}")]
    Archive(String),
    #[error("feature extraction failed: {0}")]
    Extraction(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
