//! Spectral analysis and the two feature representations fed to the
//! classifiers: the 16-value [`FeatureVector`] and the 64×64 [`ClipImage`].

mod denoise;
mod features;
mod filter;
mod image;
mod mel;
mod mfcc;
mod stft;

pub use denoise::{noise_reduce, NoiseGate};
pub use features::{feature_vector, zcr, FeatureVector, FEATURE_LEN, N_MFCC};
pub use filter::{butterworth_highpass_coeffs, high_pass_filter, Biquad};
pub use image::{filter_low_feature, pixel_std, render_image, render_image_with_ref, ClipImage, IMAGE_SIZE};
pub use mel::{hz_to_mel, log_amplitude, mel_centers, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpectrogram, DB_FLOOR};
pub use mfcc::{dct2_ortho, idct2_ortho, mfcc, mfcc_from_db};
pub use stft::{hann_window, istft, stft, stft_frames};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("empty signal")]
    EmptySignal,
    #[error("signal too short: {len} samples, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("degenerate mel band: {0}")]
    DegenerateBand(String),
    #[error("invalid spectrogram parameters: {0}")]
    InvalidParams(String),
}

/// Framing and mel-band configuration shared by every spectral operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
}

impl Default for SpectrogramParams {
    /// 2048/512 framing at 22050 Hz, 30 mel bands from 1500 Hz to Nyquist.
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            n_mels: 30,
            fmin: 1500.0,
            fmax: 11_025.0,
            sample_rate: crate::audio::CANONICAL_RATE,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidParams(m));
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return bad(format!("n_fft {} is not a power of two", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("hop {} outside 1..=n_fft", self.hop));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin ({}) < fmax ({}) <= {nyquist}",
                self.fmin, self.fmax
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}
