//! Decoding, channel folding and resampling of raw recordings, plus the
//! dataset manifest and the recordings-archive client.

mod fetch;
mod manifest;
mod resample;
mod wav;

pub use fetch::{fetch_recordings, FetchError, FetchOptions, FetchSummary};
pub use manifest::{
    load_manifest, parse_manifest_csv, parse_manifest_json, save_manifest, Category,
    DatasetManifest, ManifestError, RecordingEntry,
};
pub use resample::{kaiser_sinc_kernel, resample, resample_to_len, KAISER_BETA, SINC_TAPS};
pub use wav::{decode_wav, encode_wav_pcm16};

use std::path::Path;

/// Working sample rate for every downstream stage.
pub const CANONICAL_RATE: u32 = 22_050;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported sample encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("unsupported channel count {0} (expected 1 or 2)")]
    UnsupportedChannels(u16),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// PCM samples in `[-1, 1]`, interleaved when `channels > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    /// Number of frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_mono(&self) -> bool {
        self.channels == 1
    }

    /// Folds channels by per-frame mean. Mono input is returned unchanged.
    pub fn to_mono(&self) -> AudioBuffer {
        if self.channels <= 1 {
            return self.clone();
        }
        let ch = self.channels as usize;
        let samples = self
            .samples
            .chunks_exact(ch)
            .map(|frame| frame.iter().sum::<f64>() / ch as f64)
            .collect();
        AudioBuffer::mono(samples, self.sample_rate)
    }

    /// Brings the buffer to the canonical mono 22050 Hz format.
    pub fn canonical(&self) -> AudioBuffer {
        resample(&self.to_mono(), CANONICAL_RATE)
    }
}

/// Free-function form of [`AudioBuffer::to_mono`].
pub fn to_mono(buffer: &AudioBuffer) -> AudioBuffer {
    buffer.to_mono()
}

/// Reads a WAV file and returns it in canonical form.
pub fn load_canonical(path: &Path) -> Result<AudioBuffer, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(decode_wav(&bytes)?.canonical())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mono_is_channel_mean() {
        let b = AudioBuffer {
            samples: vec![1.0, 0.0],
            sample_rate: 8000,
            channels: 2,
        };
        assert_eq!(b.to_mono().samples, vec![0.5]);

        let b = AudioBuffer {
            samples: vec![0.5, -0.5, 0.5, 0.5],
            sample_rate: 8000,
            channels: 2,
        };
        assert_eq!(b.to_mono().samples, vec![0.0, 0.5]);
    }

    #[test]
    fn mono_passthrough() {
        let b = AudioBuffer::mono(vec![0.2, -0.2], 8000);
        assert_eq!(to_mono(&b), b);
    }
}
