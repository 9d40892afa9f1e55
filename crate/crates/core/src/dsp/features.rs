use serde::{Deserialize, Serialize};

use super::mfcc::mfcc;
use super::{DspError, SpectrogramParams};

pub const N_MFCC: usize = 15;
pub const FEATURE_LEN: usize = N_MFCC + 1;

/// Per-clip MFCC means (15 values) followed by the mean zero-crossing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn zcr(&self) -> f64 {
        self.0[N_MFCC]
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Zero-crossing rate per frame. Frames are not centered; `sign(0) = +1`.
pub fn zcr(samples: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    assert!(frame >= 2 && hop >= 1);
    if samples.len() < frame {
        return Vec::new();
    }
    let n_frames = (samples.len() - frame) / hop + 1;
    (0..n_frames)
        .map(|t| {
            let w = &samples[t * hop..t * hop + frame];
            let crossings = w
                .windows(2)
                .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
                .count();
            crossings as f64 / frame as f64
        })
        .collect()
}

pub fn feature_vector(
    samples: &[f64],
    params: &SpectrogramParams,
    include_c0: bool,
) -> Result<FeatureVector, DspError> {
    if samples.len() < params.n_fft {
        return Err(DspError::TooShort {
            len: samples.len(),
            need: params.n_fft,
        });
    }
    let m = mfcc(samples, N_MFCC, params, include_c0)?;
    let mut v = [0.0; FEATURE_LEN];
    for (i, row) in m.rows().into_iter().enumerate() {
        v[i] = row.mean().unwrap_or(0.0);
    }
    let rates = zcr(samples, params.n_fft, params.hop);
    v[N_MFCC] = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(FeatureVector(v))
}
