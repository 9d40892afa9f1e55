use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, PipelineConfig, PipelineError};
use crate::audio::{load_canonical, load_manifest, DatasetManifest};
use crate::augment::{augment_recording, AugmentPlan, Branch, ClipRecord, ClipSource};
use crate::classify::FeatureSettings;
use crate::dsp::{feature_vector, mel_spectrogram, pixel_std, render_image, ClipImage, DspError, SpectrogramParams, FEATURE_LEN};
use crate::par;

/// Cache-level bookkeeping, stored as `preprocess.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub plan: AugmentPlan,
    pub features: FeatureSettings,
    pub class_table: Vec<String>,
    /// `(recording id, species label)` in manifest order.
    pub recordings: Vec<(String, String)>,
    pub clips_per_class: BTreeMap<String, usize>,
    /// `(recording or clip id, message)`.
    pub failures: Vec<(String, String)>,
    pub dropped_low_feature: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedClip {
    pub clip_id: String,
    pub recording: String,
    pub label: String,
    pub branch: Branch,
    pub start_s: f64,
    pub end_s: f64,
    pub augmentations: String,
    pub features: Vec<f64>,
    /// Relative to the cache directory.
    pub image_path: PathBuf,
    /// Present after preprocessing in memory, or after [`ClipCache::load_images`].
    pub image: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipCache {
    pub dir: PathBuf,
    pub meta: CacheMeta,
    pub clips: Vec<CachedClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub clips: usize,
    pub clips_per_class: BTreeMap<String, usize>,
    pub failures: Vec<(String, String)>,
    pub dropped_low_feature: usize,
}

impl ClipCache {
    pub fn summary(&self) -> PreprocessSummary {
        PreprocessSummary {
            clips: self.clips.len(),
            clips_per_class: self.meta.clips_per_class.clone(),
            failures: self.meta.failures.clone(),
            dropped_low_feature: self.meta.dropped_low_feature,
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.meta.class_table.iter().position(|c| c == label)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clips
            .iter()
            .map(|c| self.class_index(&c.label).expect("labels come from the class table"))
            .collect()
    }

    /// Reads the PGM images of `indices` that are not already in memory.
    pub fn load_images(&mut self, indices: &[usize]) -> Result<(), PipelineError> {
        let dir = self.dir.clone();
        let missing: Vec<usize> = indices.iter().copied().filter(|&i| self.clips[i].image.is_none()).collect();
        let loaded = par::map(&missing, |&i| {
            let path = dir.join(&self.clips[i].image_path);
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            ClipImage::from_pgm(&bytes, self.clips[i].clip_id.clone())
                .map(|im| im.pixels)
                .ok_or(PipelineError::Cache {
                    path,
                    msg: "not a 64x64 PGM".into(),
                })
        });
        for (i, im) in missing.into_iter().zip(loaded) {
            self.clips[i].image = Some(im?);
        }
        Ok(())
    }
}

fn image_rel_path(clip: &ClipRecord) -> PathBuf {
    PathBuf::from("images")
        .join(&clip.source.id)
        .join(format!("{}_{}.pgm", clip.start_ms(), clip.tag_string()))
}

enum ClipOutcome {
    Kept(CachedClip),
    LowFeature,
    Failed(String, String),
}

fn process_clip(clip: &ClipRecord, params: &SpectrogramParams, cfg: &PipelineConfig) -> ClipOutcome {
    let computed = (|| -> Result<(Vec<f64>, ClipImage), DspError> {
        let fv = feature_vector(&clip.audio.samples, params, cfg.features.include_c0)?;
        let image = render_image(&mel_spectrogram(&clip.audio.samples, params)?);
        // Quantize now so in-memory runs see exactly what the cache stores.
        let image = ClipImage::from_pgm(&image.to_pgm(), clip.clip_id()).expect("own PGM output parses");
        Ok((fv.0.to_vec(), image))
    })();
    match computed {
        Err(e) => ClipOutcome::Failed(clip.clip_id(), e.to_string()),
        Ok((_, image)) if pixel_std(&image) < cfg.features.min_image_std => ClipOutcome::LowFeature,
        Ok((features, image)) => ClipOutcome::Kept(CachedClip {
            clip_id: clip.clip_id(),
            recording: clip.source.id.clone(),
            label: clip.source.label.clone(),
            branch: clip.branch,
            start_s: clip.start_s,
            end_s: clip.end_s,
            augmentations: clip.augmentations.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";"),
            features,
            image_path: image_rel_path(clip),
            image: Some(image.pixels),
        }),
    }
}

/// Runs `plan` over every manifest recording and computes features and
/// images, without touching the disk beyond reading audio.
pub fn preprocess_in_memory(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    plan: &AugmentPlan,
) -> Result<ClipCache, PipelineError> {
    plan.validate()?;
    let params = cfg.spectrogram.clone();
    let per_recording = par::map(&manifest.entries, |entry| {
        let source = ClipSource {
            id: entry.id.clone(),
            label: entry.species_label.clone(),
            category: entry.category,
        };
        let audio = load_canonical(&manifest.resolve_path(entry)).map_err(|e| e.to_string())?;
        let clips = augment_recording(&source, &audio, plan, cfg.seed, &params).map_err(|e| e.to_string())?;
        Ok::<_, String>(clips.iter().map(|c| process_clip(c, &params, cfg)).collect::<Vec<_>>())
    });
    let mut clips = Vec::new();
    let mut failures = Vec::new();
    let mut dropped_low_feature = 0;
    for (entry, result) in manifest.entries.iter().zip(per_recording) {
        match result {
            Err(msg) => failures.push((entry.id.clone(), msg)),
            Ok(outcomes) => {
                for o in outcomes {
                    match o {
                        ClipOutcome::Kept(c) => clips.push(c),
                        ClipOutcome::LowFeature => dropped_low_feature += 1,
                        ClipOutcome::Failed(id, msg) => failures.push((id, msg)),
                    }
                }
            }
        }
    }
    let mut clips_per_class: BTreeMap<String, usize> = manifest.class_table.iter().map(|c| (c.clone(), 0)).collect();
    for c in &clips {
        *clips_per_class.entry(c.label.clone()).or_default() += 1;
    }
    let meta = CacheMeta {
        plan: plan.clone(),
        features: FeatureSettings {
            spectrogram: params,
            include_c0: cfg.features.include_c0,
            window_s: plan.window_s,
            denoise: plan.denoise,
            highpass_hz: plan.transforms.highpass_hz,
        },
        class_table: manifest.class_table.clone(),
        recordings: manifest
            .entries
            .iter()
            .map(|e| (e.id.clone(), e.species_label.clone()))
            .collect(),
        clips_per_class,
        failures,
        dropped_low_feature,
    };
    Ok(ClipCache {
        dir: cfg.paths.cache_dir.clone(),
        meta,
        clips,
    })
}

#[derive(Serialize, Deserialize)]
struct ClipRow {
    clip_id: String,
    recording_id: String,
    label: String,
    branch: Branch,
    start_s: f64,
    end_s: f64,
    augmentations: String,
    image: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::Cache {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Writes `clips.csv`, `features.csv`, `images/` and `preprocess.json`.
/// Any previous image tree in the directory is replaced.
pub fn write_cache(cache: &ClipCache) -> Result<(), PipelineError> {
    let dir = &cache.dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let images = dir.join("images");
    if images.exists() {
        std::fs::remove_dir_all(&images).map_err(io_err(&images))?;
    }

    let clips_path = dir.join("clips.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &cache.clips {
        w.serialize(ClipRow {
            clip_id: c.clip_id.clone(),
            recording_id: c.recording.clone(),
            label: c.label.clone(),
            branch: c.branch,
            start_s: c.start_s,
            end_s: c.end_s,
            augmentations: c.augmentations.clone(),
            image: c.image_path.to_string_lossy().replace('\\', "/"),
        })
        .map_err(csv_err(&clips_path))?;
    }
    write_file(&clips_path, &w.into_inner().expect("in-memory writer"))?;

    let feat_path = dir.join("features.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["clip_id".to_string()];
    header.extend((0..FEATURE_LEN).map(|i| format!("f{i}")));
    header.push("label".into());
    w.write_record(&header).map_err(csv_err(&feat_path))?;
    for c in &cache.clips {
        let mut rec = vec![c.clip_id.clone()];
        rec.extend(c.features.iter().map(|v| v.to_string()));
        rec.push(c.label.clone());
        w.write_record(&rec).map_err(csv_err(&feat_path))?;
    }
    write_file(&feat_path, &w.into_inner().expect("in-memory writer"))?;

    let results = par::map(&cache.clips, |c| match &c.image {
        Some(px) => write_file(&dir.join(&c.image_path), &ClipImage::new(px.clone(), c.clip_id.clone()).to_pgm()),
        None => Ok(()),
    });
    results.into_iter().collect::<Result<(), _>>()?;

    let meta = serde_json::to_vec_pretty(&cache.meta).expect("meta serializes");
    write_file(&dir.join("preprocess.json"), &meta)
}

/// Loads a cache written by [`write_cache`]. Images stay on disk until
/// [`ClipCache::load_images`] is called.
pub fn read_cache(dir: &Path) -> Result<ClipCache, PipelineError> {
    let meta_path = dir.join("preprocess.json");
    if !meta_path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "preprocessed cache",
            path: meta_path,
            hint: "birdsong preprocess",
        });
    }
    let meta: CacheMeta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(io_err(&meta_path))?)
        .map_err(|e| PipelineError::Cache {
            path: meta_path.clone(),
            msg: e.to_string(),
        })?;

    let feat_path = dir.join("features.csv");
    let mut features: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut r = csv::Reader::from_path(&feat_path).map_err(csv_err(&feat_path))?;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&feat_path))?;
        let bad = |msg: &str| PipelineError::Cache {
            path: feat_path.clone(),
            msg: msg.to_string(),
        };
        if rec.len() != FEATURE_LEN + 2 {
            return Err(bad("wrong column count"));
        }
        let values = (1..=FEATURE_LEN)
            .map(|i| rec[i].parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("unparsable feature value"))?;
        features.insert(rec[0].to_string(), values);
    }

    let clips_path = dir.join("clips.csv");
    let mut r = csv::Reader::from_path(&clips_path).map_err(csv_err(&clips_path))?;
    let mut clips = Vec::new();
    for row in r.deserialize::<ClipRow>() {
        let row = row.map_err(csv_err(&clips_path))?;
        let features = features.remove(&row.clip_id).ok_or_else(|| PipelineError::Cache {
            path: feat_path.clone(),
            msg: format!("no features for clip {}", row.clip_id),
        })?;
        clips.push(CachedClip {
            clip_id: row.clip_id,
            recording: row.recording_id,
            label: row.label,
            branch: row.branch,
            start_s: row.start_s,
            end_s: row.end_s,
            augmentations: row.augmentations,
            features,
            image_path: PathBuf::from(row.image),
            image: None,
        });
    }
    Ok(ClipCache {
        dir: dir.to_path_buf(),
        meta,
        clips,
    })
}

/// The `preprocess` stage: manifest in, cache directory out.
pub fn preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary, PipelineError> {
    let manifest_path = cfg.paths.manifest_path();
    if !manifest_path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "manifest",
            path: manifest_path,
            hint: "birdsong fetch",
        });
    }
    let manifest = load_manifest(&manifest_path)?;
    let cache = preprocess_in_memory(cfg, &manifest, &cfg.active_plan())?;
    write_cache(&cache)?;
    Ok(cache.summary())
}
