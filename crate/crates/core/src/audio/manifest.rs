use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("duplicate recording id `{0}`")]
    DuplicateId(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Recording category as tagged by the archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Call,
    Song,
    #[default]
    Other,
}

impl FromStr for Category {
    type Err = std::convert::Infallible;

    /// Unknown tags map to `Other`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Ok(if s == "call" {
            Category::Call
        } else if s == "song" {
            Category::Song
        } else {
            Category::Other
        })
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Call => "call",
            Category::Song => "song",
            Category::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    pub species_label: String,
    #[serde(default)]
    pub category: Category,
    pub file_path: PathBuf,
    #[serde(default)]
    pub duration_s: f64,
    /// Kept for provenance; never used as a training target.
    #[serde(default)]
    pub secondary_labels: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<RecordingEntry>,
    /// Species labels in first-appearance order.
    pub class_table: Vec<String>,
    /// Directory that relative `file_path`s are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_entries(entries: Vec<RecordingEntry>) -> Result<Self, ManifestError> {
        let mut ids = HashSet::new();
        let mut class_table: Vec<String> = Vec::new();
        for e in &entries {
            if e.species_label.trim().is_empty() {
                return Err(ManifestError::Parse(format!(
                    "recording `{}` has a blank species label",
                    e.id
                )));
            }
            if !(e.duration_s >= 0.0) {
                return Err(ManifestError::Parse(format!(
                    "recording `{}` has a negative duration",
                    e.id
                )));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(ManifestError::DuplicateId(e.id.clone()));
            }
            if !class_table.contains(&e.species_label) {
                class_table.push(e.species_label.clone());
            }
        }
        Ok(Self {
            entries,
            class_table,
            base_dir: PathBuf::new(),
        })
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_table.iter().position(|c| c == label)
    }

    pub fn resolve_path(&self, entry: &RecordingEntry) -> PathBuf {
        if entry.file_path.is_absolute() {
            entry.file_path.clone()
        } else {
            self.base_dir.join(&entry.file_path)
        }
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Subset with the same class table (so class indices stay stable).
    pub fn subset(&self, keep: impl Fn(&RecordingEntry) -> bool) -> DatasetManifest {
        DatasetManifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            class_table: self.class_table.clone(),
            base_dir: self.base_dir.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    id: String,
    species_label: String,
    category: String,
    file_path: String,
    duration_s: f64,
    secondary_labels: String,
}

/// Loads a manifest from CSV, or from JSON when the extension is `.json`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut manifest = if is_json {
        parse_manifest_json(&text)?
    } else {
        parse_manifest_csv(&text)?
    };
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

pub fn parse_manifest_csv(text: &str) -> Result<DatasetManifest, ManifestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ManifestError::Parse(e.to_string()))?
        .clone();
    let expected = [
        "id",
        "species_label",
        "category",
        "file_path",
        "duration_s",
        "secondary_labels",
    ];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(ManifestError::Parse(format!(
            "unexpected header `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| ManifestError::Parse(e.to_string()))?;
        entries.push(RecordingEntry {
            id: row.id,
            species_label: row.species_label,
            category: row.category.parse().unwrap_or_default(),
            file_path: PathBuf::from(row.file_path),
            duration_s: row.duration_s,
            secondary_labels: row
                .secondary_labels
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    DatasetManifest::from_entries(entries)
}

pub fn parse_manifest_json(text: &str) -> Result<DatasetManifest, ManifestError> {
    let entries: Vec<RecordingEntry> =
        serde_json::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
    DatasetManifest::from_entries(entries)
}

/// Writes CSV (or JSON for `.json` paths), replacing the file atomically.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    };
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let bytes = if is_json {
        serde_json::to_vec_pretty(&manifest.entries).expect("entries serialize")
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &manifest.entries {
            w.serialize(CsvRow {
                id: e.id.clone(),
                species_label: e.species_label.clone(),
                category: e.category.to_string(),
                file_path: e.file_path.display().to_string(),
                duration_s: e.duration_s,
                secondary_labels: e.secondary_labels.join(";"),
            })
            .map_err(|e| ManifestError::Parse(e.to_string()))?;
        }
        if manifest.entries.is_empty() {
            return write_atomic(
                path,
                b"id,species_label,category,file_path,duration_s,secondary_labels\n",
            )
            .map_err(io_err);
        }
        w.into_inner().expect("in-memory csv")
    };
    write_atomic(path, &bytes).map_err(io_err)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
