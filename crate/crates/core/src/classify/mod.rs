//! The three model families and their shared artifact format.
//!
//! k-NN and the random forest consume 16-value feature vectors; the CNN
//! consumes 64×64 spectrogram images. All `predict_proba` methods return a
//! probability vector over the class table.

mod artifact;
pub mod cnn;
mod forest;
mod knn;

pub use artifact::{load_model, save_model, FeatureSettings, Model, ModelArtifact, ModelKind, FORMAT_VERSION, MAGIC};
pub use cnn::{
    cnn_train, CnnArchitecture, CnnModel, EpochStats, FinalActivation, TrainConfig, TrainHistory,
};
pub use forest::{bootstrap_indices, forest_fit, gini, DecisionTree, ForestModel, ForestParams, Node};
pub use knn::{knn_fit, KnnModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid k = {k} for {n} training points")]
    InvalidK { k: usize, n: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),
    #[error("model file is truncated")]
    TruncatedPayload,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
