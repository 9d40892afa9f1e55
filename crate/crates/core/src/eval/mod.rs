//! Leakage-free splitting, cross-validation, metrics and audio-level voting.

mod metrics;
mod split;
mod vote;

use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, rank_of, MetricsReport};
pub use split::{apportion, kfold, split_dataset, split_indices, ClassTooSmall, DatasetSplit, Partition, SplitSpec};
pub use vote::{audio_accuracy, group_by_recording, vote, vote_audio, AudioVerdict, VoteMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("cannot make {k} folds from {n} groups")]
    TooFewItems { k: usize, n: usize },
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("probability rows have {got} classes, expected {expected}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("recording {0} has no clip predictions")]
    EmptyGroup(String),
}

/// One line of an augmentation ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub plan: String,
    pub image_count: usize,
    pub clip_accuracy: Option<f64>,
    pub audio_accuracy: Option<f64>,
    pub error: Option<String>,
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.plan.len()).max().unwrap_or(4).max(4);
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{:.2}%", 100.0 * a));
    let mut s = format!("{:<width$}  {:>7}  {:>9}  {:>9}\n", "plan", "images", "clip acc", "audio acc");
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:>7}  {:>9}  {:>9}",
            r.plan,
            r.image_count,
            fmt(r.clip_accuracy),
            fmt(r.audio_accuracy)
        ));
        if let Some(e) = &r.error {
            s.push_str(&format!("  error: {e}"));
        }
        s.push('\n');
    }
    s
}
