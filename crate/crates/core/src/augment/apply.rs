use super::noise::add_gaussian_noise;
use super::nonsilent::split_nonsilent_windows;
use super::split::{split_clips, wrap_shift};
use super::vocoder::pitch_shift;
use super::{AugmentError, AugmentPlan, Branch, ClipRecord, ClipSource, Transform};
use crate::audio::{load_canonical, AudioBuffer, DatasetManifest};
use crate::dsp::{high_pass_filter, noise_reduce, NoiseGate, SpectrogramParams};
use crate::{par, seed};

#[derive(Debug, Default)]
pub struct PlanOutput {
    pub clips: Vec<ClipRecord>,
    /// `(recording id, error message)` for recordings that could not be used.
    pub failures: Vec<(String, String)>,
}

fn noise_seed(seed: u64, clip: &ClipRecord) -> u64 {
    seed::derive(
        seed,
        &[
            "augment".to_string(),
            clip.source.id.clone(),
            clip.start_ms().to_string(),
            clip.tag_string(),
        ],
    )
}

fn finish(
    clip: ClipRecord,
    plan: &AugmentPlan,
    seed: u64,
    variant: bool,
) -> Result<Option<ClipRecord>, AugmentError> {
    let t = &plan.transforms;
    let mut clip = clip;
    if let Some(cutoff_hz) = t.highpass_hz {
        let y = high_pass_filter(&clip.audio.samples, clip.audio.sample_rate, cutoff_hz);
        clip = clip.with_audio(y, Transform::HighPass { cutoff_hz });
    }
    if variant {
        if let Some(n) = t.pitch_shift_steps {
            clip = pitch_shift(&clip, n);
        }
        if t.wrap && clip.audio.samples.len() >= 2 {
            clip = wrap_shift(&clip);
        }
    }
    if let Some(snr) = t.gaussian_snr_db {
        let s = noise_seed(seed, &clip);
        match add_gaussian_noise(&clip, snr, s) {
            Ok(c) => clip = c,
            // A silent window has no SNR; it cannot carry a call either.
            Err(AugmentError::SilentClip) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(clip))
}

/// Applies `plan` to one decoded (canonical) recording.
pub fn augment_recording(
    source: &ClipSource,
    audio: &AudioBuffer,
    plan: &AugmentPlan,
    seed: u64,
    spectrogram: &SpectrogramParams,
) -> Result<Vec<ClipRecord>, AugmentError> {
    plan.validate()?;
    let mut audio = audio.clone();
    let mut base_tags = Vec::new();
    if plan.denoise && audio.samples.len() >= spectrogram.n_fft {
        audio.samples = noise_reduce(&audio.samples, spectrogram, &NoiseGate::default())?;
        base_tags.push(Transform::Denoise);
    }
    let mut out = Vec::new();

    if plan.include_origin {
        for mut clip in split_clips(source, &audio, plan.window_s, 0.0, plan.min_len(), plan.head_limit_s) {
            clip.branch = Branch::Origin;
            clip.augmentations = base_tags.clone();
            out.extend(finish(clip, plan, seed, false)?);
        }
    }
    if !plan.variant_duplicates_origin() {
        let windows = match plan.transforms.nonsilent_top_db {
            Some(top_db) => {
                let limit = plan
                    .head_limit_s
                    .map(|l| ((l * audio.sample_rate as f64).round() as usize).min(audio.samples.len()))
                    .unwrap_or(audio.samples.len());
                let whole = ClipRecord {
                    source: source.clone(),
                    start_s: 0.0,
                    end_s: limit as f64 / audio.sample_rate as f64,
                    branch: Branch::Variant,
                    augmentations: base_tags.clone(),
                    audio: AudioBuffer::mono(audio.samples[..limit].to_vec(), audio.sample_rate),
                };
                split_nonsilent_windows(&whole, top_db, Some(plan.window_s))
            }
            None => split_clips(source, &audio, plan.window_s, plan.stride_s, plan.min_len(), plan.head_limit_s)
                .into_iter()
                .map(|mut c| {
                    c.augmentations = base_tags.clone();
                    c
                })
                .collect(),
        };
        for clip in windows {
            out.extend(finish(clip, plan, seed, true)?);
        }
    }
    Ok(out)
}

/// Loads every manifest recording and applies `plan`. Recordings are
/// processed in parallel; output order follows the manifest. Failures are
/// collected rather than aborting the run.
pub fn apply_plan(
    manifest: &DatasetManifest,
    plan: &AugmentPlan,
    seed: u64,
    spectrogram: &SpectrogramParams,
) -> Result<PlanOutput, AugmentError> {
    plan.validate()?;
    let results = par::map(&manifest.entries, |entry| {
        let source = ClipSource {
            id: entry.id.clone(),
            label: entry.species_label.clone(),
            category: entry.category,
        };
        load_canonical(&manifest.resolve_path(entry))
            .map_err(AugmentError::from)
            .and_then(|audio| augment_recording(&source, &audio, plan, seed, spectrogram))
    });
    let mut output = PlanOutput::default();
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok(clips) => output.clips.extend(clips),
            Err(e) => output.failures.push((entry.id.clone(), e.to_string())),
        }
    }
    Ok(output)
}
