//! Synthetic bird-song corpus for smoke tests and benchmarks.
//!
//! Five made-up species, each with its own call shape: rising sweeps,
//! falling sweeps, a fast trill, a two-note alternation and a warble. Every
//! recording draws its own pitch, tempo, loudness, onset and noise level, and
//! carries a steady background hum inside the analysis band plus
//! low-frequency rumble below it.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{encode_wav_pcm16, save_manifest, AudioBuffer, Category, DatasetManifest, RecordingEntry};
use crate::{seed, CANONICAL_RATE};

pub const SPECIES: [&str; 5] = [
    "Ascending Sweeper",
    "Falling Whistler",
    "Rapid Triller",
    "Two-note Tinkerbird",
    "Wobbling Warbler",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub recordings_per_species: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            recordings_per_species: 40,
            duration_s: 10.0,
            sample_rate: CANONICAL_RATE,
            seed: 0,
        }
    }
}

/// A note: frequency as a function of normalized time within the note.
fn note(out: &mut [f64], rate: f64, start: f64, len: f64, amp: f64, freq: impl Fn(f64) -> f64) {
    let i0 = (start * rate) as usize;
    let n = (len * rate) as usize;
    let mut phase = 0.0;
    for k in 0..n {
        let Some(slot) = out.get_mut(i0 + k) else { break };
        let u = k as f64 / n as f64;
        phase += TAU * freq(u) / rate;
        // Short raised-cosine fades keep the note edges click-free.
        let env = (std::f64::consts::PI * u).sin().powf(0.5);
        *slot += amp * env * phase.sin();
    }
}

/// One recording of `species` (index into [`SPECIES`]).
pub fn synth_recording(species: usize, duration_s: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = sample_rate as f64;
    let n = (duration_s * rate).round() as usize;
    let mut y = vec![0.0; n];
    let pitch = rng.random_range(0.9..1.1);
    let tempo = rng.random_range(0.9..1.1);
    let amp = rng.random_range(0.3..0.7);
    let mut t = rng.random_range(0.0..0.4);
    while t < duration_s {
        let a = amp * rng.random_range(0.7..1.0);
        let period = match species % SPECIES.len() {
            0 => {
                note(&mut y, rate, t, 0.3 * tempo, a, |u| pitch * (2000.0 + 2000.0 * u));
                0.5
            }
            1 => {
                note(&mut y, rate, t, 0.25 * tempo, a, |u| pitch * (6500.0 - 3000.0 * u));
                0.45
            }
            2 => {
                for k in 0..6 {
                    note(&mut y, rate, t + k as f64 * 0.07 * tempo, 0.045 * tempo, a, |_| pitch * 3200.0);
                }
                0.8
            }
            3 => {
                note(&mut y, rate, t, 0.18 * tempo, a, |_| pitch * 5000.0);
                note(&mut y, rate, t + 0.25 * tempo, 0.18 * tempo, a, |_| pitch * 7200.0);
                0.7
            }
            _ => {
                let depth = 600.0 * pitch;
                note(&mut y, rate, t, 0.6 * tempo, a, |u| pitch * 4500.0 + depth * (TAU * 5.0 * u).sin());
                0.9
            }
        };
        t += period * tempo + rng.random_range(0.0..0.25);
    }
    let signal_power = y.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    // A steady background voice (insect, distant bird) unique to the recording.
    let hum_f = rng.random_range(1800.0..9000.0);
    let hum_a = amp * rng.random_range(0.02..0.12);
    let hum_rate = rng.random_range(0.2..2.0);
    for (i, v) in y.iter_mut().enumerate() {
        let t = i as f64 / rate;
        *v += hum_a * (0.6 + 0.4 * (TAU * hum_rate * t).sin()) * (TAU * hum_f * t).sin();
    }
    let snr_db = rng.random_range(8.0..20.0);
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let rumble_f = rng.random_range(80.0..300.0);
    let rumble_a = rng.random_range(0.02..0.1);
    for (i, v) in y.iter_mut().enumerate() {
        let noise: f64 = StandardNormal.sample(rng);
        *v += sigma * noise + rumble_a * (TAU * rumble_f * i as f64 / rate).sin();
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        y.iter_mut().for_each(|v| *v *= 0.99 / peak);
    }
    y
}

/// Writes the corpus as 16-bit WAV files under `dir/audio/` plus
/// `dir/manifest.csv`, and returns the manifest.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> std::io::Result<DatasetManifest> {
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let mut entries = Vec::new();
    for (s, name) in SPECIES.iter().enumerate() {
        for r in 0..spec.recordings_per_species {
            let id = format!("syn{s}{r:03}");
            let mut rng = seed::derived_rng(spec.seed, &["synthetic", &id]);
            let samples = synth_recording(s, spec.duration_s, spec.sample_rate, &mut rng);
            let rel = PathBuf::from("audio").join(format!("{id}.wav"));
            std::fs::write(
                dir.join(&rel),
                encode_wav_pcm16(&AudioBuffer::mono(samples, spec.sample_rate)),
            )?;
            entries.push(RecordingEntry {
                id,
                species_label: name.to_string(),
                category: Category::Song,
                file_path: rel,
                duration_s: spec.duration_s,
                secondary_labels: Vec::new(),
            });
        }
    }
    let mut manifest = DatasetManifest::from_entries(entries).map_err(std::io::Error::other)?;
    save_manifest(&manifest, &dir.join("manifest.csv")).map_err(std::io::Error::other)?;
    manifest.base_dir = dir.to_path_buf();
    Ok(manifest)
}
