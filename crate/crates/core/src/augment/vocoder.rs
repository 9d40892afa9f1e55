use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{ClipRecord, Transform};
use crate::audio::resample_to_len;
use crate::dsp::{istft, stft_frames};

const N_FFT: usize = 2048;
const HOP: usize = N_FFT / 4;

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * (p / (2.0 * PI)).round()
}

/// Phase-vocoder time scaling of an STFT by `rate` (> 1 speeds up).
fn phase_vocoder(spec: &Array2<Complex64>, rate: f64, hop: usize) -> Array2<Complex64> {
    let (n_bins, n_frames) = spec.dim();
    let n_fft = 2 * (n_bins - 1);
    let steps: Vec<f64> = (0..)
        .map(|i| i as f64 * rate)
        .take_while(|&s| s < n_frames as f64)
        .collect();
    let expected: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * hop as f64 * k as f64 / n_fft as f64)
        .collect();
    let at = |k: usize, t: usize| {
        if t < n_frames {
            spec[[k, t]]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let mut phase: Vec<f64> = (0..n_bins).map(|k| spec[[k, 0]].arg()).collect();
    let mut out = Array2::<Complex64>::zeros((n_bins, steps.len()));
    for (t, &step) in steps.iter().enumerate() {
        let i = step.floor() as usize;
        let alpha = step - i as f64;
        for k in 0..n_bins {
            let (c0, c1) = (at(k, i), at(k, i + 1));
            let mag = (1.0 - alpha) * c0.norm() + alpha * c1.norm();
            out[[k, t]] = Complex64::from_polar(mag, phase[k]);
            let dphase = wrap_phase(c1.arg() - c0.arg() - expected[k]);
            phase[k] += expected[k] + dphase;
        }
    }
    out
}

/// Stretches `samples` in time by `1 / rate` while keeping pitch.
/// Output length is `round(len / rate)`.
pub fn phase_vocoder_stretch(samples: &[f64], rate: f64) -> Vec<f64> {
    assert!(rate > 0.0, "stretch rate must be positive");
    let out_len = (samples.len() as f64 / rate).round() as usize;
    if samples.is_empty() {
        return vec![0.0; out_len];
    }
    let spec = stft_frames(samples, N_FFT, HOP).expect("non-empty signal");
    let stretched = phase_vocoder(&spec, rate, HOP);
    istft(&stretched, N_FFT, HOP, out_len)
}

pub fn time_stretch(clip: &ClipRecord, rate: f64) -> ClipRecord {
    clip.with_audio(
        phase_vocoder_stretch(&clip.audio.samples, rate),
        Transform::TimeStretch { rate },
    )
}

/// Shifts pitch by `n_steps` semitones, keeping the length: stretch by
/// `2^(-n/12)` then resample back to the original length.
pub fn pitch_shift_samples(samples: &[f64], n_steps: f64) -> Vec<f64> {
    assert!(n_steps.abs() <= 24.0, "pitch shift limited to two octaves");
    if n_steps == 0.0 {
        return samples.to_vec();
    }
    let rate = 2f64.powf(-n_steps / 12.0);
    let stretched = phase_vocoder_stretch(samples, rate);
    resample_to_len(&stretched, samples.len())
}

pub fn pitch_shift(clip: &ClipRecord, n_steps: f64) -> ClipRecord {
    clip.with_audio(
        pitch_shift_samples(&clip.audio.samples, n_steps),
        Transform::PitchShift { n_steps },
    )
}
