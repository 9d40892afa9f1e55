use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classify::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    #[default]
    Majority,
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioVerdict {
    pub recording: String,
    pub class: usize,
    /// Summed clip probabilities, normalized to sum to 1.
    pub scores: Vec<f64>,
    pub n_clips: usize,
}

/// Per-class sums taken over sorted values so the result does not depend on
/// clip order.
fn summed(clips: &[Vec<f64>]) -> Vec<f64> {
    let n = clips[0].len();
    (0..n)
        .map(|c| {
            let mut col: Vec<f64> = clips.iter().map(|p| p[c]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum()
        })
        .collect()
}

fn best_among(scores: &[f64], candidates: &[usize]) -> usize {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

/// Decides one recording from its clip probability rows.
pub fn vote(clips: &[Vec<f64>], mode: VoteMode) -> Option<(usize, Vec<f64>)> {
    if clips.is_empty() {
        return None;
    }
    let sums = summed(clips);
    let n = sums.len();
    let class = match mode {
        VoteMode::Probability => argmax(&sums),
        VoteMode::Majority => {
            let mut counts = vec![0usize; n];
            for p in clips {
                counts[argmax(p)] += 1;
            }
            let top = *counts.iter().max().expect("non-empty");
            let tied: Vec<usize> = (0..n).filter(|&c| counts[c] == top).collect();
            best_among(&sums, &tied)
        }
    };
    let total: f64 = sums.iter().sum();
    let scores = if total > 0.0 {
        sums.iter().map(|v| v / total).collect()
    } else {
        sums
    };
    Some((class, scores))
}

/// Groups clip rows by recording id, in first-appearance order.
pub fn group_by_recording(ids: &[String], probs: &[Vec<f64>]) -> Vec<(String, Vec<Vec<f64>>)> {
    let mut out: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (id, p) in ids.iter().zip(probs) {
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            out.push((id.clone(), Vec::new()));
            out.len() - 1
        });
        out[slot].1.push(p.clone());
    }
    out
}

pub fn vote_audio(groups: &[(String, Vec<Vec<f64>>)], mode: VoteMode) -> Result<Vec<AudioVerdict>, EvalError> {
    groups
        .iter()
        .map(|(rec, clips)| {
            let (class, scores) = vote(clips, mode).ok_or_else(|| EvalError::EmptyGroup(rec.clone()))?;
            Ok(AudioVerdict {
                recording: rec.clone(),
                class,
                scores,
                n_clips: clips.len(),
            })
        })
        .collect()
}

/// Fraction of verdicts whose class matches `truth(recording)`.
pub fn audio_accuracy(verdicts: &[AudioVerdict], truth: impl Fn(&str) -> Option<usize>) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    let ok = verdicts.iter().filter(|v| truth(&v.recording) == Some(v.class)).count();
    ok as f64 / verdicts.len() as f64
}
