//! Turning recordings into many labeled training clips.
//!
//! A recording is windowed into fixed-length clips ([`split_clips`]) and
//! each clip may then pass through the transforms of an [`AugmentPlan`] in
//! a fixed order: non-silent splitting, high-pass filtering, pitch shift,
//! wrap-around shift and additive Gaussian noise. Every clip records the
//! transforms it went through, in order, in [`ClipRecord::augmentations`].

mod apply;
mod noise;
mod nonsilent;
mod split;
mod vocoder;

pub use apply::{apply_plan, augment_recording, PlanOutput};
pub use noise::add_gaussian_noise;
pub use nonsilent::{nonsilent_intervals, split_nonsilent, MIN_NONSILENT_S};
pub use split::{clip_spans, split_clips, wrap_shift, wrap_shift_samples};
pub use vocoder::{phase_vocoder_stretch, pitch_shift, pitch_shift_samples, time_stretch};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, AudioError, Category};
use crate::dsp::DspError;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("clip is silent; SNR is undefined")]
    SilentClip,
    #[error("invalid augmentation plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// One applied transformation, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Denoise,
    NonSilent { top_db: f64 },
    HighPass { cutoff_hz: f64 },
    PitchShift { n_steps: f64 },
    TimeStretch { rate: f64 },
    Wrap,
    Gaussian { snr_db: f64 },
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Denoise => write!(f, "denoise"),
            Transform::NonSilent { top_db } => write!(f, "nonsilent{top_db}"),
            Transform::HighPass { cutoff_hz } => write!(f, "hp{cutoff_hz}"),
            Transform::PitchShift { n_steps } => write!(f, "pitch{n_steps:+}"),
            Transform::TimeStretch { rate } => write!(f, "stretch{rate}"),
            Transform::Wrap => write!(f, "wrap"),
            Transform::Gaussian { snr_db } => write!(f, "gauss{snr_db}"),
        }
    }
}

/// Which half of an "origin + variation" plan produced a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Plain non-overlapping windows kept alongside the variations.
    Origin,
    /// Windows produced by the plan's stride / non-silent / transform settings.
    Variant,
}

/// Identity of the recording a clip came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSource {
    pub id: String,
    pub label: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub source: ClipSource,
    /// Span in the source recording (before any zero padding).
    pub start_s: f64,
    pub end_s: f64,
    pub branch: Branch,
    pub augmentations: Vec<Transform>,
    /// Mono, canonical rate.
    pub audio: AudioBuffer,
}

impl ClipRecord {
    pub fn start_ms(&self) -> u64 {
        (self.start_s * 1000.0).round() as u64
    }

    /// `o` / `v` followed by the transform tags, dash separated.
    pub fn tag_string(&self) -> String {
        let mut s = String::from(match self.branch {
            Branch::Origin => "o",
            Branch::Variant => "v",
        });
        for t in &self.augmentations {
            s.push('-');
            s.push_str(&t.to_string());
        }
        s
    }

    /// Stable identifier: `<source_id>/<start_ms>_<tags>`.
    pub fn clip_id(&self) -> String {
        format!("{}/{}_{}", self.source.id, self.start_ms(), self.tag_string())
    }

    pub(crate) fn with_audio(&self, samples: Vec<f64>, tag: Transform) -> ClipRecord {
        let mut out = self.clone();
        out.audio.samples = samples;
        out.augmentations.push(tag);
        out
    }
}

/// Optional transforms of a plan, applied in the order the fields appear.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSet {
    pub nonsilent_top_db: Option<f64>,
    pub highpass_hz: Option<f64>,
    pub pitch_shift_steps: Option<f64>,
    pub wrap: bool,
    pub gaussian_snr_db: Option<f64>,
}

impl TransformSet {
    /// Whether the variant branch changes anything beyond the windowing.
    fn varies_clips(&self) -> bool {
        self.nonsilent_top_db.is_some() || self.pitch_shift_steps.is_some() || self.wrap
    }
}

/// How to cut and transform one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPlan {
    pub name: String,
    pub window_s: f64,
    /// Window spacing; 0 means back-to-back windows.
    pub stride_s: f64,
    /// Shortest trailing window kept (zero padded). Defaults to `window_s`.
    pub min_len_s: Option<f64>,
    /// Only the first `head_limit_s` seconds are used.
    pub head_limit_s: Option<f64>,
    /// Also emit the plain back-to-back windows (the "origin +" rows).
    pub include_origin: bool,
    /// Spectral gating of the whole recording before windowing.
    pub denoise: bool,
    pub transforms: TransformSet,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            name: "5s".into(),
            window_s: 5.0,
            stride_s: 0.0,
            min_len_s: None,
            head_limit_s: None,
            include_origin: false,
            denoise: false,
            transforms: TransformSet::default(),
        }
    }
}

impl AugmentPlan {
    pub fn windows(window_s: f64) -> Self {
        Self {
            name: format!("{window_s}s"),
            window_s,
            ..Default::default()
        }
    }

    pub fn with_stride(mut self, stride_s: f64) -> Self {
        self.stride_s = stride_s;
        self
    }

    pub fn with_origin(mut self) -> Self {
        self.include_origin = true;
        self
    }

    pub fn with_min_len(mut self, min_len_s: f64) -> Self {
        self.min_len_s = Some(min_len_s);
        self
    }

    pub fn with_head_limit(mut self, limit_s: f64) -> Self {
        self.head_limit_s = Some(limit_s);
        self
    }

    pub fn with_transforms(mut self, transforms: TransformSet) -> Self {
        self.transforms = transforms;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn min_len(&self) -> f64 {
        self.min_len_s.unwrap_or(self.window_s)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidPlan(m));
        if !(self.window_s > 0.0) {
            return bad(format!("window_s must be positive, got {}", self.window_s));
        }
        if !(self.stride_s >= 0.0) {
            return bad(format!("stride_s must be >= 0, got {}", self.stride_s));
        }
        let min_len = self.min_len();
        if !(min_len > 0.0 && min_len <= self.window_s) {
            return bad(format!("min_len_s {min_len} must lie in (0, window_s]"));
        }
        if let Some(limit) = self.head_limit_s {
            if !(limit > 0.0) {
                return bad(format!("head_limit_s must be positive, got {limit}"));
            }
        }
        if let Some(n) = self.transforms.pitch_shift_steps {
            if n.abs() > 24.0 {
                return bad(format!("pitch shift of {n} semitones exceeds 24"));
            }
        }
        if let Some(hz) = self.transforms.highpass_hz {
            if !(hz > 0.0 && hz < crate::audio::CANONICAL_RATE as f64 / 2.0) {
                return bad(format!("high-pass cutoff {hz} Hz outside (0, nyquist)"));
            }
        }
        Ok(())
    }

    /// True when the variant branch would just repeat the origin clips.
    pub(crate) fn variant_duplicates_origin(&self) -> bool {
        let stride_is_window = self.stride_s == 0.0 || self.stride_s == self.window_s;
        self.include_origin
            && stride_is_window
            && !self.transforms.varies_clips()
    }
}
