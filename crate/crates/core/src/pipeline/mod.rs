//! End-to-end orchestration: the stages behind the `birdsong` subcommands.
//!
//! ```text
//! manifest ──preprocess──▶ cache/ (clips.csv, features.csv, images/, preprocess.json)
//!   cache ──train──▶ output/ (model.bsng, history.json, split.json)
//!   cache + output ──evaluate──▶ output/ (report.json, report.txt, confusion.csv)
//! ```
//!
//! All randomness is derived from [`PipelineConfig::seed`] through
//! [`crate::seed::derive`], so every stage is reproducible.

mod cache;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cache::{preprocess, preprocess_in_memory, read_cache, write_cache, CacheMeta, CachedClip, ClipCache, PreprocessSummary};
pub use run::{
    cross_validate, evaluate, partition, predict_file, run_ablation, train, train_model, CvReport, EvalReport,
    Prediction, SplitRecord, TrainOutcome,
};

use crate::augment::{AugmentError, AugmentPlan};
use crate::audio::{AudioError, ManifestError};
use crate::classify::{FinalActivation, ModelError, ModelKind, TrainConfig};
use crate::dsp::{DspError, SpectrogramParams};
use crate::eval::{EvalError, SplitSpec, VoteMode};
use crate::rebalance::{RebalanceConfig, RebalanceError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {what}: {path} (run `{hint}` first)")]
    MissingArtifact {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache file {path}: {msg}")]
    Cache { path: PathBuf, msg: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rebalance(#[from] RebalanceError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<data_dir>/manifest.csv`.
    pub manifest: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            cache_dir: "cache".into(),
            output_dir: "output".into(),
            manifest: None,
        }
    }
}

impl Paths {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.data_dir.join("manifest.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Keep the 0th cepstral coefficient in the 15 MFCC means.
    pub include_c0: bool,
    /// Clips whose image has a lower pixel standard deviation are dropped.
    pub min_image_std: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            include_c0: false,
            min_image_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSettings {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub dense_units: usize,
    pub final_activation: FinalActivation,
}

impl Default for CnnSettings {
    fn default() -> Self {
        Self {
            conv1_filters: 32,
            conv2_filters: 64,
            dense_units: 128,
            final_activation: FinalActivation::Softmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// k-NN neighbours.
    pub k: usize,
    pub n_trees: usize,
    pub max_features: Option<usize>,
    pub cnn: CnnSettings,
    pub train: TrainConfig,
    pub vote: VoteMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Cnn,
            k: 5,
            n_trees: 100,
            max_features: None,
            cnn: CnnSettings::default(),
            train: TrainConfig::default(),
            vote: VoteMode::Majority,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchConfig {
    pub base_url: String,
    pub query: Option<String>,
    pub limit: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            base_url: crate::audio::FetchOptions::default().base_url,
            query: None,
            limit: 100,
        }
    }
}

/// Everything a pipeline run depends on. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Ungrouped clip-level splits and folds.
    pub paper_mode: bool,
    pub paths: Paths,
    pub spectrogram: SpectrogramParams,
    pub features: FeatureConfig,
    /// The first plan drives `preprocess`; `ablate` runs all of them.
    pub plans: Vec<AugmentPlan>,
    pub rebalance: RebalanceConfig,
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub cv: CvConfig,
    pub fetch: FetchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paper_mode: false,
            paths: Paths::default(),
            spectrogram: SpectrogramParams::default(),
            features: FeatureConfig::default(),
            plans: vec![AugmentPlan::default()],
            rebalance: RebalanceConfig::default(),
            model: ModelConfig::default(),
            split: SplitSpec::default(),
            cv: CvConfig::default(),
            fetch: FetchConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data_dir);
        fix(&mut self.paths.cache_dir);
        fix(&mut self.paths.output_dir);
        if let Some(m) = self.paths.manifest.as_mut() {
            fix(m);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        self.spectrogram.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.split.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        for plan in &self.plans {
            plan.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.model.k == 0 {
            return cfg_err("model.k must be at least 1".into());
        }
        if self.model.n_trees == 0 {
            return cfg_err("model.n_trees must be at least 1".into());
        }
        if self.model.train.batch_size == 0 || !(self.model.train.learning_rate >= 0.0) {
            return cfg_err("model.train needs batch_size >= 1 and a non-negative learning_rate".into());
        }
        if self.rebalance.low > self.rebalance.high {
            return cfg_err("rebalance.low must not exceed rebalance.high".into());
        }
        if self.cv.folds < 2 {
            return cfg_err("cv.folds must be at least 2".into());
        }
        Ok(())
    }

    /// The plan `preprocess` uses.
    pub fn active_plan(&self) -> AugmentPlan {
        self.plans.first().cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_model_kind_rejected() {
        let e = PipelineConfig::from_toml("[model]\nkind = \"svm\"\n").unwrap_err();
        assert!(matches!(e, PipelineError::Config(_)));
    }

    #[test]
    fn plans_parse() {
        let cfg = PipelineConfig::from_toml(
            "[[plans]]\nname = \"o+2s\"\nwindow_s = 5.0\nstride_s = 2.0\ninclude_origin = true\n\
             [plans.transforms]\nhighpass_hz = 1500.0\n",
        )
        .unwrap();
        assert_eq!(cfg.active_plan().stride_s, 2.0);
        assert_eq!(cfg.active_plan().transforms.highpass_hz, Some(1500.0));
    }

    #[test]
    fn bad_split_rejected() {
        assert!(PipelineConfig::from_toml("[split]\ntrain = 0.9\n").is_err());
    }
}
