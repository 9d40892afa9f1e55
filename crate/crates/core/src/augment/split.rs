use super::{Branch, ClipRecord, ClipSource, Transform};
use crate::audio::AudioBuffer;

/// Sample spans `(start, end)` of the windows cut from a signal of `len`
/// samples. `end` excludes zero padding.
///
/// Windows start at 0 and advance by `stride` (or `window` when `stride` is
/// 0) inside the first `limit` samples. Full windows are always kept; the
/// first window that runs past the covered prefix is kept only when at
/// least `min_len` samples of it remain.
pub fn clip_spans(
    len: usize,
    window: usize,
    stride: usize,
    min_len: usize,
    limit: Option<usize>,
) -> Vec<(usize, usize)> {
    assert!(window > 0);
    let covered = limit.map_or(len, |l| l.min(len));
    let stride = if stride == 0 { window } else { stride };
    let mut spans = Vec::new();
    let mut start = 0;
    while start + window <= covered {
        spans.push((start, start + window));
        start += stride;
    }
    if start < covered && covered - start >= min_len.max(1) {
        spans.push((start, covered));
    }
    spans
}

fn secs_to_samples(s: f64, rate: u32) -> usize {
    (s * rate as f64).round() as usize
}

/// Cuts `audio` (mono) into clip records, zero-padding short tail windows
/// to the full window length.
pub fn split_clips(
    source: &ClipSource,
    audio: &AudioBuffer,
    window_s: f64,
    stride_s: f64,
    min_len_s: f64,
    head_limit_s: Option<f64>,
) -> Vec<ClipRecord> {
    debug_assert!(audio.is_mono());
    let rate = audio.sample_rate;
    let window = secs_to_samples(window_s, rate);
    let spans = clip_spans(
        audio.samples.len(),
        window,
        secs_to_samples(stride_s, rate),
        secs_to_samples(min_len_s, rate),
        head_limit_s.map(|l| secs_to_samples(l, rate)),
    );
    spans
        .into_iter()
        .map(|(a, b)| {
            let mut samples = audio.samples[a..b].to_vec();
            samples.resize(window, 0.0);
            ClipRecord {
                source: source.clone(),
                start_s: a as f64 / rate as f64,
                end_s: b as f64 / rate as f64,
                branch: Branch::Variant,
                augmentations: Vec::new(),
                audio: AudioBuffer::mono(samples, rate),
            }
        })
        .collect()
}

/// Second half followed by first half; for odd lengths the first half
/// keeps the extra sample.
pub fn wrap_shift_samples(x: &[f64]) -> Vec<f64> {
    let cut = x.len().div_ceil(2);
    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(&x[cut..]);
    out.extend_from_slice(&x[..cut]);
    out
}

pub fn wrap_shift(clip: &ClipRecord) -> ClipRecord {
    assert!(clip.audio.samples.len() >= 2, "wrap needs at least 2 samples");
    clip.with_audio(wrap_shift_samples(&clip.audio.samples), Transform::Wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Category;

    fn source() -> ClipSource {
        ClipSource {
            id: "r".into(),
            label: "A".into(),
            category: Category::Other,
        }
    }

    #[test]
    fn strided_count() {
        // 100 s at 1 sample per second keeps the arithmetic exact.
        assert_eq!(clip_spans(100, 5, 1, 5, Some(100)).len(), 96);
        assert_eq!(clip_spans(100, 5, 2, 5, None).len(), 48);
        assert_eq!(clip_spans(100, 5, 0, 5, None).len(), 20);
    }

    #[test]
    fn short_tail_discarded() {
        let spans = clip_spans(12, 10, 0, 5, None);
        assert_eq!(spans, vec![(0, 10)]);
    }

    #[test]
    fn short_recording_padded() {
        let rate = 100;
        let audio = AudioBuffer::mono(vec![0.5; 7 * rate as usize], rate);
        let clips = split_clips(&source(), &audio, 10.0, 0.0, 5.0, None);
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].end_s, 7.0);
        assert_eq!(clips[0].audio.samples.len(), 1000);
        assert_eq!(clips[0].audio.samples[999], 0.0);
        assert!(split_clips(&source(), &AudioBuffer::mono(vec![0.0; 400], rate), 10.0, 0.0, 5.0, None).is_empty());
    }

    #[test]
    fn head_limit() {
        assert_eq!(clip_spans(1000, 5, 1, 5, Some(100)).len(), 96);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_shift_samples(&[1.0, 2.0, 3.0, 4.0]), vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(wrap_shift_samples(&[1.0, 2.0, 3.0]), vec![3.0, 1.0, 2.0]);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(wrap_shift_samples(&wrap_shift_samples(&x)), x.to_vec());
    }

    #[test]
    fn wrap_records_tag() {
        let audio = AudioBuffer::mono(vec![1.0, 2.0, 3.0, 4.0], 4);
        let clip = &split_clips(&source(), &audio, 1.0, 0.0, 1.0, None)[0];
        let w = wrap_shift(clip);
        assert_eq!(w.augmentations, vec![Transform::Wrap]);
        assert_eq!(w.audio.samples, vec![3.0, 4.0, 1.0, 2.0]);
    }
}
