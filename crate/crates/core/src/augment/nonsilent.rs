use super::split::clip_spans;
use super::{ClipRecord, Transform};
use crate::audio::AudioBuffer;

const FRAME: usize = 2048;
const HOP: usize = 512;
/// Non-silent runs shorter than this are dropped.
pub const MIN_NONSILENT_S: f64 = 0.5;

/// Sample intervals whose centered-frame RMS is within `top_db` of the
/// loudest frame.
pub fn nonsilent_intervals(x: &[f64], top_db: f64) -> Vec<(usize, usize)> {
    if x.is_empty() {
        return Vec::new();
    }
    let n_frames = x.len() / HOP + 1;
    let half = FRAME as isize / 2;
    let ms: Vec<f64> = (0..n_frames)
        .map(|t| {
            let c = (t * HOP) as isize;
            let lo = (c - half).max(0) as usize;
            let hi = ((c + half) as usize).min(x.len());
            x[lo..hi].iter().map(|v| v * v).sum::<f64>() / FRAME as f64
        })
        .collect();
    let peak = ms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    // Compare mean-square power, so the dB threshold is 10*log10.
    let threshold = peak * 10f64.powf(-top_db / 10.0);
    let mut out = Vec::new();
    let mut run_start = None;
    for (t, &p) in ms.iter().enumerate() {
        match (p > threshold, run_start) {
            (true, None) => run_start = Some(t),
            (false, Some(s)) => {
                out.push((s * HOP, (t * HOP).min(x.len())));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push((s * HOP, x.len()));
    }
    out
}

/// Splits a clip into its non-silent stretches (each at least
/// [`MIN_NONSILENT_S`] long).
pub fn split_nonsilent(clip: &ClipRecord, top_db: f64) -> Vec<ClipRecord> {
    split_nonsilent_windows(clip, top_db, None)
}

/// Like [`split_nonsilent`], additionally chopping stretches longer than
/// `max_len_s` into back-to-back pieces.
pub(crate) fn split_nonsilent_windows(
    clip: &ClipRecord,
    top_db: f64,
    max_len_s: Option<f64>,
) -> Vec<ClipRecord> {
    let rate = clip.audio.sample_rate;
    let min_len = (MIN_NONSILENT_S * rate as f64).round() as usize;
    let max_len = max_len_s.map(|s| (s * rate as f64).round() as usize);
    let mut out = Vec::new();
    for (a, b) in nonsilent_intervals(&clip.audio.samples, top_db) {
        let pieces = match max_len {
            Some(w) if b - a > w => clip_spans(b - a, w, 0, min_len, None)
                .into_iter()
                .map(|(p, q)| (a + p, a + q))
                .collect(),
            _ => vec![(a, b)],
        };
        for (p, q) in pieces {
            if q - p < min_len {
                continue;
            }
            let mut c = clip.clone();
            c.start_s = clip.start_s + p as f64 / rate as f64;
            c.end_s = clip.start_s + q as f64 / rate as f64;
            c.audio = AudioBuffer::mono(clip.audio.samples[p..q].to_vec(), rate);
            c.augmentations.push(Transform::NonSilent { top_db });
            out.push(c);
        }
    }
    out
}
