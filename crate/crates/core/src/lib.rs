//! Birdsong species classification from field recordings.
//!
//! The crate covers the whole path from raw WAV files to audio-level
//! verdicts: canonical decoding ([`audio`]), mel/MFCC features and
//! spectrogram images ([`dsp`]), time and frequency domain clip
//! augmentation ([`augment`]), class rebalancing ([`rebalance`]), k-NN,
//! random forest and a small CNN ([`classify`]), and grouped splitting,
//! cross-validation, metrics and clip voting ([`eval`]). [`pipeline`] chains
//! them together the way the `birdsong` CLI does.
//!
//! Data-parallel loops run on rayon when the default `parallel` feature is
//! on and fall back to plain iterators otherwise. Every reduction happens in
//! index order, so results are bit-identical either way.

pub mod audio;
pub mod augment;
pub mod classify;
pub mod dsp;
pub mod eval;
pub mod par;
pub mod pipeline;
pub mod rebalance;
pub mod seed;
pub mod synthetic;

pub use audio::{AudioBuffer, CANONICAL_RATE};
pub use dsp::{FeatureVector, SpectrogramParams};
