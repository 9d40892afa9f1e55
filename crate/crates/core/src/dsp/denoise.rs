use serde::{Deserialize, Serialize};

use super::stft::{istft, stft};
use super::{DspError, SpectrogramParams};

/// Spectral gate settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseGate {
    /// Percentile (0-100) of a bin's magnitude over time taken as its noise floor.
    pub percentile: f64,
    /// Bins quieter than floor + margin are attenuated.
    pub margin_db: f64,
    /// Amplitude factor applied to gated bins.
    pub attenuation: f64,
}

impl Default for NoiseGate {
    fn default() -> Self {
        Self {
            percentile: 10.0,
            margin_db: 15.0,
            attenuation: 0.1,
        }
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Spectral gating noise reduction. Length is preserved.
///
/// Each frequency bin's floor is its magnitude percentile over frames,
/// capped by the median of those floors across bins so that steady tones
/// are not mistaken for noise.
pub fn noise_reduce(
    samples: &[f64],
    params: &SpectrogramParams,
    gate: &NoiseGate,
) -> Result<Vec<f64>, DspError> {
    if samples.len() < params.n_fft {
        return Err(DspError::TooShort {
            len: samples.len(),
            need: params.n_fft,
        });
    }
    let mut spec = stft(samples, params)?;
    let floors: Vec<f64> = spec
        .rows()
        .into_iter()
        .map(|row| {
            let mut mags: Vec<f64> = row.iter().map(|c| c.norm()).collect();
            mags.sort_by(f64::total_cmp);
            percentile(&mags, gate.percentile)
        })
        .collect();
    let mut sorted = floors.clone();
    sorted.sort_by(f64::total_cmp);
    let cap = percentile(&sorted, 50.0);
    let margin = 10f64.powf(gate.margin_db / 20.0);
    for (mut row, floor) in spec.rows_mut().into_iter().zip(floors) {
        let threshold = floor.min(cap) * margin;
        for c in row.iter_mut() {
            if c.norm() < threshold {
                *c *= gate.attenuation;
            }
        }
    }
    Ok(istft(&spec, params.n_fft, params.hop, samples.len()))
}
