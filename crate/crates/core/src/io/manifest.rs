//! Dataset manifests: which masks (and optional images and meta files)
//! make up each split.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::files::{read_json, write_json};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid("split", format!("expected train, val or test, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub mask_path: PathBuf,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_path: Option<PathBuf>,
}

impl ManifestEntry {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.mask_path).chain(&self.image_path).chain(&self.meta_path)
    }
}

/// Paths are stored as written; relative ones resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Unique ids and existing files.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.image_id.is_empty() {
                return Err(Error::Manifest("empty image_id".into()));
            }
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image_id {:?}", e.image_id)));
            }
            for p in e.paths() {
                let full = base.join(p);
                if !full.is_file() {
                    return Err(Error::Manifest(format!("{}: {} does not exist", e.image_id, full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: DatasetManifest = read_json(path)?;
        m.validate(&base_dir(path))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn resolve(path: &Path, p: &Path) -> PathBuf {
        base_dir(path).join(p)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
