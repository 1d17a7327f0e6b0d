//! Dataset manifests: one json record per line, paths relative to the
//! manifest's directory, generator display names in a sidecar file.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
    pub y: u8,
    pub g: u32,
    pub split: Split,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory that relative media paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub generator_names: BTreeMap<u32, String>,
}

pub fn generators_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("generators.json")
}

impl DatasetManifest {
    pub fn new(
        root: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
        generator_names: BTreeMap<u32, String>,
    ) -> Result<Self> {
        let m = Self {
            root: root.into(),
            entries,
            generator_names,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.y > 1 || (e.y == 1) != (e.g >= 1) {
                return Err(Error::InvalidArgument(format!(
                    "entry {i} ({}): label y={} inconsistent with generator g={}",
                    e.source_id, e.y, e.g
                )));
            }
            if !self.generator_names.contains_key(&e.g) {
                return Err(Error::InvalidArgument(format!(
                    "entry {i} ({}): generator {} has no name",
                    e.source_id, e.g
                )));
            }
            if let Some(prev) = seen.insert(&e.source_id, e.split) {
                if prev != e.split {
                    return Err(Error::InvalidArgument(format!(
                        "source_id {} appears in both {prev} and {}",
                        e.source_id, e.split
                    )));
                }
            }
        }
        if !self.generator_names.contains_key(&0) {
            return Err(Error::InvalidArgument(
                "generator names must include class 0 (real)".into(),
            ));
        }
        Ok(())
    }

    /// Number of fake generators `G`; classes are `0..=G`.
    pub fn num_generators(&self) -> usize {
        self.generator_names.keys().next_back().copied().unwrap_or(0) as usize
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn class_counts(&self, split: Split) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.split == split) {
            *counts.entry(e.g).or_insert(0) += 1;
        }
        counts
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
                Error::InvalidArgument(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            entries.push(entry);
        }
        let names_path = generators_path(path);
        let generator_names = if names_path.exists() {
            binio::read_json(&names_path)?
        } else {
            let max_g = entries.iter().map(|e| e.g).max().unwrap_or(0);
            (0..=max_g)
                .map(|g| (g, if g == 0 { "real".to_string() } else { format!("generator_{g}") }))
                .collect()
        };
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(root, entries, generator_names)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&serde_json::to_string(e).map_err(|err| Error::json(path, err))?);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        binio::write_json(&generators_path(path), &self.generator_names)
    }
}
