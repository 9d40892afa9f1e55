use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{preprocess_in_memory, read_cache, ClipCache};
use super::{io_err, PipelineConfig, PipelineError};
use crate::audio::{load_canonical, load_manifest, Category};
use crate::augment::{split_clips, AugmentPlan, Branch, ClipSource};
use crate::classify::{
    cnn_train, forest_fit, knn_fit, load_model, save_model, CnnArchitecture, CnnModel, ForestParams, Model,
    ModelArtifact, ModelKind,
};
use crate::dsp::{
    feature_vector, high_pass_filter, mel_spectrogram, noise_reduce, render_image, ClipImage, NoiseGate, IMAGE_SIZE,
};
use crate::eval::{
    audio_accuracy, compute_metrics, group_by_recording, kfold, split_indices, vote, vote_audio, AblationRow,
    ClassTooSmall, MetricsReport, Partition, VoteMode,
};
use crate::rebalance::{rebalance_features, rebalance_items, LabeledSet};
use crate::seed;

const TOP_KS: [usize; 3] = [1, 3, 5];

/// Clip ids of each partition, saved as `split.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub grouped: bool,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub warnings: Vec<ClassTooSmall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub recording: String,
    pub truth: String,
    pub predicted: String,
    pub n_clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub plan: String,
    pub grouped: bool,
    pub metrics: MetricsReport,
    pub verdicts: Vec<VerdictRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: ModelKind,
    pub plan: String,
    pub folds: usize,
    pub grouped: bool,
    pub fold_accuracy: Vec<f64>,
    /// Metrics over the pooled out-of-fold predictions.
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub split: SplitRecord,
    pub history: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class: String,
    /// All classes by descending normalized score.
    pub ranked: Vec<(String, f64)>,
    pub n_clips: usize,
}

fn grouped(cfg: &PipelineConfig) -> bool {
    cfg.split.group_by_recording && !cfg.paper_mode
}

/// Clips used for scoring. When a plan keeps the original windows next to
/// augmented variants, only the originals are scored.
fn eval_filter(cache: &ClipCache, idx: &[usize]) -> Vec<usize> {
    if cache.meta.plan.include_origin {
        idx.iter().copied().filter(|&i| cache.clips[i].branch == Branch::Origin).collect()
    } else {
        idx.to_vec()
    }
}

/// Train/val/test clip indices. Grouped mode splits recordings; paper mode
/// splits clips directly.
pub fn partition(cfg: &PipelineConfig, cache: &ClipCache) -> Result<(Partition, Vec<ClassTooSmall>), PipelineError> {
    let mut spec = cfg.split.clone();
    spec.seed = cfg.seed;
    let (mut p, warnings) = if grouped(cfg) {
        let labels: Vec<&str> = cache.meta.recordings.iter().map(|(_, l)| l.as_str()).collect();
        let ids: Vec<&str> = cache.meta.recordings.iter().map(|(id, _)| id.as_str()).collect();
        let (rp, w) = split_indices(&labels, Some(&ids), &spec)?;
        let mut slot: HashMap<&str, u8> = HashMap::new();
        for (part, list) in [(0u8, &rp.train), (1, &rp.val), (2, &rp.test)] {
            for &i in list {
                slot.insert(ids[i], part);
            }
        }
        let mut p = Partition::default();
        for (i, c) in cache.clips.iter().enumerate() {
            match slot.get(c.recording.as_str()) {
                Some(0) => p.train.push(i),
                Some(1) => p.val.push(i),
                Some(_) => p.test.push(i),
                None => {}
            }
        }
        (p, w)
    } else {
        let labels: Vec<&str> = cache.clips.iter().map(|c| c.label.as_str()).collect();
        split_indices::<_, &str>(&labels, None, &spec)?
    };
    p.val = eval_filter(cache, &p.val);
    p.test = eval_filter(cache, &p.test);
    Ok((p, warnings))
}

fn image_refs<'a>(cache: &'a ClipCache, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter()
        .map(|&i| cache.clips[i].image.as_deref().expect("images loaded before use"))
        .collect()
}

/// Fits the configured model on `train` (after rebalancing), using `val`
/// for early stopping where the model supports it.
pub fn train_model(
    cfg: &PipelineConfig,
    cache: &mut ClipCache,
    train: &[usize],
    val: &[usize],
) -> Result<(ModelArtifact, serde_json::Value), PipelineError> {
    let labels = cache.labels();
    let n_classes = cache.meta.class_table.len();
    let model_seed = seed::derive(cfg.seed, &["model"]);
    let mut rng = seed::derived_rng(cfg.seed, &["rebalance"]);
    let (model, history) = match cfg.model.kind {
        ModelKind::Knn | ModelKind::Forest => {
            let set = LabeledSet::new(train.iter().map(|&i| (cache.clips[i].features.clone(), labels[i])));
            let set = rebalance_features(&set, &cfg.rebalance, &mut rng)?;
            let x: Vec<Vec<f64>> = set.items.iter().map(|it| it.value.clone()).collect();
            let y: Vec<usize> = set.items.iter().map(|it| it.label).collect();
            let model = if cfg.model.kind == ModelKind::Knn {
                Model::Knn(knn_fit(&x, &y, n_classes, cfg.model.k.min(x.len().max(1)))?)
            } else {
                let params = ForestParams {
                    n_trees: cfg.model.n_trees,
                    max_features: cfg.model.max_features,
                    seed: model_seed,
                };
                Model::Forest(forest_fit(&x, &y, n_classes, &params)?)
            };
            let history = json!({ "kind": cfg.model.kind, "n_train": x.len(), "class_counts": set.class_counts() });
            (model, history)
        }
        ModelKind::Cnn => {
            let set = LabeledSet::new(train.iter().map(|&i| (i, labels[i])));
            let set = rebalance_items(&set, &cfg.rebalance, &mut rng);
            let train_idx: Vec<usize> = set.items.iter().map(|it| it.value).collect();
            let all: Vec<usize> = train_idx.iter().chain(val).copied().collect();
            cache.load_images(&all)?;
            let arch = CnnArchitecture {
                input_size: IMAGE_SIZE,
                conv1_filters: cfg.model.cnn.conv1_filters,
                conv2_filters: cfg.model.cnn.conv2_filters,
                dense_units: cfg.model.cnn.dense_units,
                n_classes,
                final_activation: cfg.model.cnn.final_activation,
            };
            let train_y: Vec<usize> = set.items.iter().map(|it| it.label).collect();
            let val_y: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
            let (model, history) = cnn_train(
                CnnModel::new(arch, model_seed)?,
                (&image_refs(cache, &train_idx), &train_y),
                (&image_refs(cache, val), &val_y),
                &cfg.model.train,
                model_seed,
            )?;
            (Model::Cnn(model), serde_json::to_value(history).expect("history serializes"))
        }
    };
    let artifact = ModelArtifact {
        class_table: cache.meta.class_table.clone(),
        features: cache.meta.features.clone(),
        model,
    };
    Ok((artifact, history))
}

fn predict_clips(artifact: &ModelArtifact, cache: &mut ClipCache, idx: &[usize]) -> Result<Vec<Vec<f64>>, PipelineError> {
    let inputs: Vec<Vec<f64>> = match artifact.model.kind() {
        ModelKind::Cnn => {
            cache.load_images(idx)?;
            idx.iter().map(|&i| cache.clips[i].image.clone().expect("loaded")).collect()
        }
        _ => idx.iter().map(|&i| cache.clips[i].features.clone()).collect(),
    };
    Ok(artifact.predict_proba(&inputs)?)
}

/// Clip metrics plus audio-level voting over the clips in `idx`.
fn score(
    class_table: &[String],
    cache: &ClipCache,
    idx: &[usize],
    probs: &[Vec<f64>],
    mode: VoteMode,
) -> Result<(MetricsReport, Vec<VerdictRow>), PipelineError> {
    let class_of = |label: &str| {
        class_table.iter().position(|c| c == label).ok_or_else(|| PipelineError::Cache {
            path: cache.dir.join("clips.csv"),
            msg: format!("label `{label}` is not in the model's class table"),
        })
    };
    let labels = idx.iter().map(|&i| class_of(&cache.clips[i].label)).collect::<Result<Vec<_>, _>>()?;
    let mut metrics = compute_metrics(probs, &labels, class_table.len(), &TOP_KS)?;
    let ids: Vec<String> = idx.iter().map(|&i| cache.clips[i].recording.clone()).collect();
    let verdicts = vote_audio(&group_by_recording(&ids, probs), mode)?;
    let truth: HashMap<&str, usize> = idx
        .iter()
        .zip(&labels)
        .map(|(&i, &l)| (cache.clips[i].recording.as_str(), l))
        .collect();
    metrics.audio_accuracy = Some(audio_accuracy(&verdicts, |r| truth.get(r).copied()));
    let rows = verdicts
        .iter()
        .map(|v| VerdictRow {
            recording: v.recording.clone(),
            truth: class_table[truth[v.recording.as_str()]].clone(),
            predicted: class_table[v.class].clone(),
            n_clips: v.n_clips,
        })
        .collect();
    Ok((metrics, rows))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn model_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.output_dir.join("model.bsng")
}

fn read_artifact(path: &Path) -> Result<ModelArtifact, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "model artifact",
            path: path.to_path_buf(),
            hint: "birdsong train",
        });
    }
    Ok(load_model(&std::fs::read(path).map_err(io_err(path))?)?)
}

/// The `train` stage. Nothing is written unless training succeeds.
pub fn train(cfg: &PipelineConfig) -> Result<TrainOutcome, PipelineError> {
    let mut cache = read_cache(&cfg.paths.cache_dir)?;
    let (p, warnings) = partition(cfg, &cache)?;
    let (artifact, history) = train_model(cfg, &mut cache, &p.train, &p.val)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| cache.clips[i].clip_id.clone()).collect::<Vec<_>>();
    let split = SplitRecord {
        grouped: grouped(cfg),
        train: ids(&p.train),
        val: ids(&p.val),
        test: ids(&p.test),
        warnings,
    };
    let out = &cfg.paths.output_dir;
    write_bytes(&model_path(cfg), &save_model(&artifact))?;
    write_json(&out.join("history.json"), &history)?;
    write_json(&out.join("split.json"), &split)?;
    Ok(TrainOutcome {
        artifact,
        split,
        history,
    })
}

/// The `evaluate` stage: scores the held-out test clips of the last `train`.
pub fn evaluate(cfg: &PipelineConfig) -> Result<EvalReport, PipelineError> {
    let artifact = read_artifact(&model_path(cfg))?;
    let split_path = cfg.paths.output_dir.join("split.json");
    if !split_path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "split record",
            path: split_path,
            hint: "birdsong train",
        });
    }
    let split: SplitRecord = serde_json::from_slice(&std::fs::read(&split_path).map_err(io_err(&split_path))?)
        .map_err(|e| PipelineError::Cache {
            path: split_path.clone(),
            msg: e.to_string(),
        })?;
    if split.test.is_empty() {
        return Err(PipelineError::Config(
            "the test partition is empty; add recordings or raise split.test".into(),
        ));
    }
    let mut cache = read_cache(&cfg.paths.cache_dir)?;
    let by_id: HashMap<&str, usize> = cache.clips.iter().enumerate().map(|(i, c)| (c.clip_id.as_str(), i)).collect();
    let idx = split
        .test
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| PipelineError::Cache {
                path: cache.dir.join("clips.csv"),
                msg: format!("clip {id} from the training split is missing; re-run train"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let probs = predict_clips(&artifact, &mut cache, &idx)?;
    let (metrics, verdicts) = score(&artifact.class_table, &cache, &idx, &probs, cfg.model.vote)?;
    let report = EvalReport {
        model: artifact.model.kind(),
        plan: cache.meta.plan.name.clone(),
        grouped: split.grouped,
        metrics,
        verdicts,
    };
    let out = &cfg.paths.output_dir;
    write_json(&out.join("report.json"), &report)?;
    write_bytes(&out.join("report.txt"), report_text(&report, &artifact.class_table).as_bytes())?;
    write_bytes(
        &out.join("confusion.csv"),
        report.metrics.confusion_csv(&artifact.class_table).as_bytes(),
    )?;
    Ok(report)
}

fn report_text(report: &EvalReport, class_table: &[String]) -> String {
    format!(
        "model              {}\nplan               {}\nsplit              {}\n{}",
        report.model,
        report.plan,
        if report.grouped { "grouped by recording" } else { "clip level" },
        report.metrics.to_text(class_table)
    )
}

/// k-fold cross-validation over the whole cache. Folds are grouped by
/// recording unless paper mode is on. Writes `cv_report.json` and
/// `cv_report.txt`.
pub fn cross_validate(cfg: &PipelineConfig, cache: &mut ClipCache) -> Result<CvReport, PipelineError> {
    let labels = cache.labels();
    let grouped = grouped(cfg);
    let groups: Vec<String> = cache.clips.iter().map(|c| c.recording.clone()).collect();
    let folds = kfold(&labels, grouped.then_some(groups.as_slice()), cfg.cv.folds, cfg.seed)?;
    let mut oof: Vec<Option<Vec<f64>>> = vec![None; cache.clips.len()];
    let mut fold_accuracy = Vec::with_capacity(folds.len());
    let mut class_table = cache.meta.class_table.clone();
    for (train, test) in &folds {
        let (artifact, _) = train_model(cfg, cache, train, &[])?;
        class_table = artifact.class_table.clone();
        let test = eval_filter(cache, test);
        let probs = predict_clips(&artifact, cache, &test)?;
        let ok = test
            .iter()
            .zip(&probs)
            .filter(|(&i, p)| crate::classify::argmax(p) == labels[i])
            .count();
        fold_accuracy.push(ok as f64 / test.len().max(1) as f64);
        for (&i, p) in test.iter().zip(probs) {
            oof[i] = Some(p);
        }
    }
    let idx: Vec<usize> = (0..oof.len()).filter(|&i| oof[i].is_some()).collect();
    let probs: Vec<Vec<f64>> = idx.iter().map(|&i| oof[i].clone().expect("filtered")).collect();
    let (metrics, _) = score(&class_table, cache, &idx, &probs, cfg.model.vote)?;
    let report = CvReport {
        model: cfg.model.kind,
        plan: cache.meta.plan.name.clone(),
        folds: folds.len(),
        grouped,
        fold_accuracy,
        metrics,
    };
    let out = &cfg.paths.output_dir;
    write_json(&out.join("cv_report.json"), &report)?;
    let text = format!(
        "model              {}\nplan               {}\nfolds              {} ({})\n{}",
        report.model,
        report.plan,
        report.folds,
        if grouped { "grouped by recording" } else { "clip level" },
        report.metrics.to_text(&class_table)
    );
    write_bytes(&out.join("cv_report.txt"), text.as_bytes())?;
    Ok(report)
}

/// Classifies one audio file: window it like the training data, score every
/// window and vote.
pub fn predict_file(model: &Path, audio_path: &Path, mode: VoteMode) -> Result<Prediction, PipelineError> {
    let artifact = read_artifact(model)?;
    let s = &artifact.features;
    let mut audio = load_canonical(audio_path)?;
    if s.denoise && audio.samples.len() >= s.spectrogram.n_fft {
        audio.samples = noise_reduce(&audio.samples, &s.spectrogram, &NoiseGate::default())?;
    }
    let source = ClipSource {
        id: audio_path.display().to_string(),
        label: String::new(),
        category: Category::Other,
    };
    let min_len = s.window_s.min(audio.duration_s()).max(1.0 / audio.sample_rate as f64);
    let clips = split_clips(&source, &audio, s.window_s, 0.0, min_len, None);
    let inputs = clips
        .iter()
        .map(|clip| {
            let mut samples = clip.audio.samples.clone();
            if let Some(hz) = s.highpass_hz {
                samples = high_pass_filter(&samples, clip.audio.sample_rate, hz);
            }
            Ok(match artifact.model.kind() {
                ModelKind::Cnn => {
                    let im = render_image(&mel_spectrogram(&samples, &s.spectrogram)?);
                    ClipImage::from_pgm(&im.to_pgm(), "").expect("own PGM output parses").pixels
                }
                _ => feature_vector(&samples, &s.spectrogram, s.include_c0)?.0.to_vec(),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let probs = artifact.predict_proba(&inputs)?;
    let (class, scores) = vote(&probs, mode).ok_or_else(|| PipelineError::Config(format!(
        "{} is too short to classify",
        audio_path.display()
    )))?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // The voted class leads even if majority voting disagrees with the scores.
    order.retain(|&c| c != class);
    order.insert(0, class);
    Ok(Prediction {
        class: artifact.class_table[class].clone(),
        ranked: order.iter().map(|&c| (artifact.class_table[c].clone(), scores[c])).collect(),
        n_clips: clips.len(),
    })
}

/// Trains and scores one model per plan on the same recording split.
/// A failing plan yields a row with its error; the grid continues.
pub fn run_ablation(cfg: &PipelineConfig, plans: &[AugmentPlan]) -> Result<Vec<AblationRow>, PipelineError> {
    let manifest_path = cfg.paths.manifest_path();
    if !manifest_path.exists() {
        return Err(PipelineError::MissingArtifact {
            what: "manifest",
            path: manifest_path,
            hint: "birdsong fetch",
        });
    }
    let manifest = load_manifest(&manifest_path)?;
    let mut rows = Vec::with_capacity(plans.len());
    for plan in plans {
        let mut image_count = 0;
        let result = (|| -> Result<(f64, Option<f64>), PipelineError> {
            let mut cache = preprocess_in_memory(cfg, &manifest, plan)?;
            image_count = cache.clips.len();
            let (p, _) = partition(cfg, &cache)?;
            if p.test.is_empty() {
                return Err(PipelineError::Config("the test partition is empty".into()));
            }
            let (artifact, _) = train_model(cfg, &mut cache, &p.train, &p.val)?;
            let probs = predict_clips(&artifact, &mut cache, &p.test)?;
            let (m, _) = score(&artifact.class_table, &cache, &p.test, &probs, cfg.model.vote)?;
            Ok((m.accuracy, m.audio_accuracy))
        })();
        rows.push(match result {
            Ok((clip, audio)) => AblationRow {
                plan: plan.name.clone(),
                image_count,
                clip_accuracy: Some(clip),
                audio_accuracy: audio,
                error: None,
            },
            Err(e) => AblationRow {
                plan: plan.name.clone(),
                image_count,
                clip_accuracy: None,
                audio_accuracy: None,
                error: Some(e.to_string()),
            },
        });
    }
    let out = &cfg.paths.output_dir;
    write_json(&out.join("ablation.json"), &rows)?;
    write_bytes(&out.join("ablation.txt"), crate::eval::ablation_table(&rows).as_bytes())?;
    Ok(rows)
}
