//! Client for a Xeno-canto style public recordings archive.
//!
//! Talks to `GET <base>/api/2/recordings?query=<q>&page=<n>`, downloads the
//! referenced audio, and keeps `<dest>/manifest.csv` up to date after every
//! file so an interrupted run leaves a valid manifest behind.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

use super::manifest::{load_manifest, save_manifest, Category, DatasetManifest, ManifestError, RecordingEntry};

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("network error: {0}")]
    Network(String),
    #[error("archive API schema changed: {0}")]
    ApiSchemaChanged(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub base_url: String,
    /// Lower bound on the spacing between consecutive HTTP requests.
    pub min_interval: Duration,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            base_url: "https://xeno-canto.org".into(),
            min_interval: Duration::from_secs(1),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Default)]
pub struct FetchSummary {
    pub downloaded: Vec<RecordingEntry>,
    pub skipped: usize,
    pub manifest_path: PathBuf,
}

struct Client {
    agent: ureq::Agent,
    opts: FetchOptions,
    last: Option<Instant>,
}

impl Client {
    fn new(opts: FetchOptions) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(opts.timeout))
            .build()
            .into();
        Self {
            agent,
            opts,
            last: None,
        }
    }

    fn pace(&mut self) {
        if let Some(last) = self.last {
            let elapsed = last.elapsed();
            if elapsed < self.opts.min_interval {
                thread::sleep(self.opts.min_interval - elapsed);
            }
        }
        self.last = Some(Instant::now());
    }

    fn page(&mut self, query: &str, page: u32) -> Result<Value, FetchError> {
        self.pace();
        let url = format!("{}/api/2/recordings", self.opts.base_url.trim_end_matches('/'));
        let text = self
            .agent
            .get(&url)
            .query("query", query)
            .query("page", page.to_string())
            .call()
            .map_err(|e| FetchError::Network(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Network(e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| FetchError::ApiSchemaChanged(format!("response is not JSON: {e}")))
    }

    fn download(&mut self, url: &str) -> Result<Vec<u8>, FetchError> {
        self.pace();
        self.agent
            .get(url)
            .call()
            .map_err(|e| FetchError::Network(e.to_string()))?
            .body_mut()
            .with_config()
            .limit(512 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| FetchError::Network(e.to_string()))
    }
}

/// A single archive record reduced to the fields the pipeline needs.
#[derive(Debug)]
struct ArchiveRecord {
    id: String,
    label: String,
    category: Category,
    file_url: String,
    file_name: Option<String>,
    duration_s: f64,
    also: Vec<String>,
}

fn parse_record(v: &Value) -> Result<ArchiveRecord, FetchError> {
    let field = |name: &str| -> Result<String, FetchError> {
        match v.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            _ => Err(FetchError::ApiSchemaChanged(format!(
                "record missing `{name}`"
            ))),
        }
    };
    let id = field("id")?;
    let label = match field("en") {
        Ok(en) if !en.trim().is_empty() => en,
        _ => format!("{} {}", field("gen")?, field("sp")?),
    };
    let mut file_url = field("file")?;
    if file_url.starts_with("//") {
        file_url = format!("https:{file_url}");
    }
    let category = v
        .get("type")
        .and_then(Value::as_str)
        .map(|t| {
            let t = t.to_ascii_lowercase();
            if t.contains("song") {
                Category::Song
            } else if t.contains("call") {
                Category::Call
            } else {
                Category::Other
            }
        })
        .unwrap_or_default();
    let duration_s = v
        .get("length")
        .and_then(Value::as_str)
        .map(parse_length)
        .unwrap_or(0.0);
    let also = v
        .get("also")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(Value::as_str)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();
    Ok(ArchiveRecord {
        id,
        label,
        category,
        file_url,
        file_name: v.get("file-name").and_then(Value::as_str).map(String::from),
        duration_s,
        also,
    })
}

/// Parses `m:ss` or `h:mm:ss` durations.
fn parse_length(s: &str) -> f64 {
    s.split(':')
        .map(|p| p.trim().parse::<f64>().unwrap_or(0.0))
        .fold(0.0, |acc, v| acc * 60.0 + v)
}

fn load_or_empty(path: &Path) -> Result<DatasetManifest, FetchError> {
    if path.exists() {
        Ok(load_manifest(path)?)
    } else {
        let mut m = DatasetManifest::default();
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }
}

/// Downloads up to `limit` recordings matching `query` into `dest`.
///
/// Records already present in the manifest are skipped, so repeating a
/// finished fetch downloads nothing.
pub fn fetch_recordings(
    query: &str,
    dest: &Path,
    limit: usize,
    opts: &FetchOptions,
) -> Result<FetchSummary, FetchError> {
    let manifest_path = dest.join("manifest.csv");
    let mut summary = FetchSummary {
        manifest_path: manifest_path.clone(),
        ..Default::default()
    };
    if limit == 0 {
        return Ok(summary);
    }
    std::fs::create_dir_all(dest)?;
    let mut manifest = load_or_empty(&manifest_path)?;
    let mut client = Client::new(opts.clone());

    let mut considered = 0usize;
    let mut page = 1u32;
    'pages: loop {
        let body = client.page(query, page)?;
        let records = body
            .get("recordings")
            .and_then(Value::as_array)
            .ok_or_else(|| FetchError::ApiSchemaChanged("missing `recordings` array".into()))?;
        let num_pages = match body.get("numPages") {
            Some(Value::Number(n)) => n.as_u64().unwrap_or(1),
            Some(Value::String(s)) => s.parse().unwrap_or(1),
            _ => 1,
        };
        if records.is_empty() {
            break;
        }
        for raw in records {
            if considered >= limit {
                break 'pages;
            }
            considered += 1;
            let rec = parse_record(raw)?;
            if manifest.contains_id(&rec.id) {
                summary.skipped += 1;
                continue;
            }
            let bytes = client.download(&rec.file_url)?;
            let file_path = store_audio(dest, &rec, &bytes)?;
            let entry = RecordingEntry {
                id: rec.id.clone(),
                species_label: rec.label.clone(),
                category: rec.category,
                file_path,
                duration_s: rec.duration_s,
                secondary_labels: rec.also.clone(),
            };
            manifest.entries.push(entry.clone());
            if !manifest.class_table.contains(&entry.species_label) {
                manifest.class_table.push(entry.species_label.clone());
            }
            save_manifest(&manifest, &manifest_path)?;
            summary.downloaded.push(entry);
        }
        if u64::from(page) >= num_pages {
            break;
        }
        page += 1;
    }
    Ok(summary)
}

/// Writes the download and returns its path relative to `dest`.
fn store_audio(dest: &Path, rec: &ArchiveRecord, bytes: &[u8]) -> Result<PathBuf, FetchError> {
    let safe_id: String = rec
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if bytes.starts_with(b"RIFF") {
        let name = PathBuf::from(format!("{safe_id}.wav"));
        std::fs::write(dest.join(&name), bytes)?;
        return Ok(name);
    }
    let ext = rec
        .file_name
        .as_deref()
        .and_then(|n| Path::new(n).extension())
        .and_then(|e| e.to_str())
        .unwrap_or("mp3")
        .to_ascii_lowercase();
    let name = PathBuf::from(format!("{safe_id}.{ext}"));
    std::fs::write(dest.join(&name), bytes)?;
    convert_external(dest, &name, &safe_id)
}

#[cfg(feature = "external-decoder")]
fn convert_external(dest: &Path, name: &Path, stem: &str) -> Result<PathBuf, FetchError> {
    let wav = PathBuf::from(format!("{stem}.wav"));
    let status = std::process::Command::new("ffmpeg")
        .args(["-y", "-loglevel", "error", "-i"])
        .arg(dest.join(name))
        .args(["-ac", "1", "-ar", "22050"])
        .arg(dest.join(&wav))
        .status()?;
    if !status.success() {
        return Err(FetchError::Io(std::io::Error::other(format!(
            "ffmpeg exited with {status}"
        ))));
    }
    std::fs::remove_file(dest.join(name))?;
    Ok(wav)
}

#[cfg(not(feature = "external-decoder"))]
fn convert_external(_dest: &Path, name: &Path, _stem: &str) -> Result<PathBuf, FetchError> {
    Ok(name.to_path_buf())
}
