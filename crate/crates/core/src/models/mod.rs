//! Binary classifiers behind the detector: a multilayer perceptron for the
//! obfuscated/clean decision and random forests for tools and techniques.

mod bundle;
mod dataset;
mod evaluate;
mod forest;
mod grid;
mod metrics;
mod mlp;

use thiserror::Error;

pub use bundle::{
    load_bundle, save_bundle, train_bundle, BundleConfig, ModelBundle, TechniqueClassifiers,
    ToolClassifiers, BUNDLE_FORMAT_VERSION,
};
pub use dataset::{read_labeled_features, write_labeled_features, Dataset, LabeledFeatures};
pub use evaluate::{evaluate_bundle, BundleEvaluation};
pub use forest::{
    predict_proba_rf, train_random_forest, DecisionTree, ForestConfig, RandomForestModel, TreeNode,
};
pub use grid::{grid_search, GridResult, Trainable};
pub use metrics::BinaryMetrics;
pub use mlp::{predict_proba_mlp, train_mlp, DenseLayer, FeatureScaling, MlpConfig, MlpModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidConfig(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("bundle format_version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("bundle feature_contract_hash {found} does not match this build ({expected})")]
    ContractMismatch { found: String, expected: String },
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that maps a feature vector to a positive-class probability.
pub trait BinaryClassifier {
    fn predict_proba(&self, x: &crate::features::FeatureVector) -> f64;

    /// Positive-class decision for probability `p`.
    fn decide(&self, p: f64) -> bool;

    fn predict(&self, x: &crate::features::FeatureVector) -> bool {
        self.decide(self.predict_proba(x))
    }
}
