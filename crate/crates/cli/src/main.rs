//! `birdsong`: fetch recordings, build the clip cache, train, evaluate and
//! classify new audio.
//!
//! Settings come from a TOML config file (`--config`, or `birdsong.toml` in
//! the working directory when present). Command-line flags override the
//! file; `BIRDSONG_CACHE` overrides the cache directory unless
//! `--cache-dir` is given.
//!
//! Exit codes: 0 on success, 1 on configuration errors and missing inputs,
//! 2 when a fetch stops part way.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use birdsong_core::audio::{fetch_recordings, FetchOptions};
use birdsong_core::classify::ModelKind;
use birdsong_core::eval::{ablation_table, VoteMode};
use birdsong_core::pipeline::{self, PipelineConfig};
use birdsong_core::synthetic::{write_corpus, CorpusSpec};

const DEFAULT_CONFIG: &str = "birdsong.toml";

#[derive(Parser, Debug)]
#[command(name = "birdsong", version, about = "Bird species classification from field recordings")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed every random choice derives from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Split and cross-validate at clip level instead of by recording.
    #[arg(long, global = true)]
    paper_mode: bool,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "BIRDSONG_CACHE")]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Download recordings of one species into the data directory.
    Fetch {
        #[arg(long)]
        species: String,
        #[arg(long)]
        limit: Option<usize>,
        /// Archive base URL.
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Cut, augment and featurize every recording in the manifest.
    Preprocess,
    /// Fit a model on the training partition of the cache.
    Train {
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the trained model on the test partition.
    Evaluate {
        /// Run k-fold cross-validation over the whole cache instead.
        #[arg(long)]
        cv: bool,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Train and score one model per configured augmentation plan.
    Ablate,
    /// Classify one audio file.
    Predict {
        audio: PathBuf,
        /// Model artifact; defaults to `<output_dir>/model.bsng`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        vote: Option<Vote>,
    },
    /// Write a synthetic five-species corpus into the data directory.
    Synth {
        #[arg(long, default_value_t = 40)]
        per_species: usize,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Vote {
    Majority,
    Probability,
}

impl From<Vote> for VoteMode {
    fn from(v: Vote) -> Self {
        match v {
            Vote::Majority => VoteMode::Majority,
            Vote::Probability => VoteMode::Probability,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None if Path::new(DEFAULT_CONFIG).exists() => PipelineConfig::from_file(Path::new(DEFAULT_CONFIG))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.paper_mode |= cli.paper_mode;
    if let Some(d) = &cli.data_dir {
        cfg.paths.data_dir = d.clone();
    }
    if let Some(d) = &cli.cache_dir {
        cfg.paths.cache_dir = d.clone();
    }
    if let Some(d) = &cli.output_dir {
        cfg.paths.output_dir = d.clone();
    }
    match &cli.command {
        Command::Train { model, epochs } => {
            if let Some(m) = model {
                cfg.model.kind = *m;
            }
            if let Some(e) = epochs {
                cfg.model.train.epochs = *e;
            }
        }
        Command::Evaluate { folds, model, .. } => {
            if let Some(f) = folds {
                cfg.cv.folds = *f;
            }
            if let Some(m) = model {
                cfg.model.kind = *m;
            }
        }
        Command::Predict { vote: Some(v), .. } => cfg.model.vote = (*v).into(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Fetch {
            species,
            limit,
            base_url,
        } => {
            let opts = FetchOptions {
                base_url: base_url.clone().unwrap_or_else(|| cfg.fetch.base_url.clone()),
                ..FetchOptions::default()
            };
            let query = cfg.fetch.query.clone().unwrap_or_else(|| species.clone());
            match fetch_recordings(&query, &cfg.paths.data_dir, limit.unwrap_or(cfg.fetch.limit), &opts) {
                Ok(s) => {
                    println!("downloaded {} recordings, {} already present", s.downloaded.len(), s.skipped);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("error: fetch stopped: {e}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Preprocess => {
            let s = pipeline::preprocess(&cfg)?;
            println!("{} clips written to {}", s.clips, cfg.paths.cache_dir.display());
            for (class, n) in &s.clips_per_class {
                println!("  {class:<32} {n}");
            }
            if s.dropped_low_feature > 0 {
                println!("dropped {} low-feature clips", s.dropped_low_feature);
            }
            if !s.failures.is_empty() {
                println!("{} recordings failed:", s.failures.len());
                for (id, msg) in &s.failures {
                    println!("  {id}: {msg}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { .. } => {
            let out = pipeline::train(&cfg)?;
            for w in &out.split.warnings {
                eprintln!(
                    "warning: class {} has only {} recordings; some partitions lack it",
                    w.class, w.groups
                );
            }
            println!(
                "trained {} on {} clips ({} val, {} test held out)",
                out.artifact.model.kind(),
                out.split.train.len(),
                out.split.val.len(),
                out.split.test.len()
            );
            println!("model written to {}", cfg.paths.output_dir.join("model.bsng").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { cv: false, .. } => {
            pipeline::evaluate(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.paths.output_dir.join("report.txt"))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { cv: true, .. } => {
            let mut cache = pipeline::read_cache(&cfg.paths.cache_dir)?;
            let report = pipeline::cross_validate(&cfg, &mut cache)?;
            for (i, a) in report.fold_accuracy.iter().enumerate() {
                println!("fold {}  accuracy {a:.4}", i + 1);
            }
            print!("{}", std::fs::read_to_string(cfg.paths.output_dir.join("cv_report.txt"))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate => {
            let rows = pipeline::run_ablation(&cfg, &cfg.plans)?;
            print!("{}", ablation_table(&rows));
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { audio, model, .. } => {
            let model = model.clone().unwrap_or_else(|| cfg.paths.output_dir.join("model.bsng"));
            let p = pipeline::predict_file(&model, audio, cfg.model.vote)?;
            println!("{} ({} clips)", audio.display(), p.n_clips);
            for (class, score) in &p.ranked {
                println!("  {score:.4}  {class}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { per_species, duration } => {
            let spec = CorpusSpec {
                recordings_per_species: *per_species,
                duration_s: *duration,
                seed: cfg.seed,
                ..CorpusSpec::default()
            };
            let m = write_corpus(&cfg.paths.data_dir, &spec)
                .with_context(|| format!("writing corpus to {}", cfg.paths.data_dir.display()))?;
            println!("wrote {} recordings to {}", m.entries.len(), cfg.paths.data_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        birdsong_core::par::init_global_threads(n.max(1));
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
