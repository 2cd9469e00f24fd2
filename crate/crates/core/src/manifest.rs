//! Persistent description of a synthesized dataset.
//!
//! A manifest is a pretty-printed JSON document with a fixed field order.
//! Paths are stored relative to the manifest's directory with `/` separators,
//! so a dataset directory can be moved as a whole.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{load_cloud, CloudFormat, PointCloud};
use crate::distort::{level_param, BaseParam, DistortionType};
use crate::error::{GqaError, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    pub levels: usize,
    pub references: Vec<ReferenceEntry>,
    pub lists: Vec<ListEntry>,
    #[serde(skip)]
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub id: String,
    pub path: String,
    /// Average nearest-neighbor edge length of the reference.
    pub edge_length: f64,
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub id: String,
    pub reference: String,
    pub dtype: DistortionType,
    /// Level 0 (the pristine reference) first, then increasing levels.
    pub items: Vec<LevelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: usize,
    pub path: String,
    pub params: Vec<BaseParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_mos: Option<f64>,
}

impl Manifest {
    pub fn new(name: impl Into<String>, seed: u64, levels: usize, root: impl Into<PathBuf>) -> Self {
        Manifest {
            format_version: MANIFEST_VERSION,
            name: name.into(),
            seed,
            levels,
            references: Vec::new(),
            lists: Vec::new(),
            root: root.into(),
        }
    }

    /// Directory that relative paths resolve against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes the manifest; its directory becomes the new root.
    pub fn save(&mut self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| GqaError::io(path, e))?;
        self.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(())
    }

    /// Parses and validates a manifest: version, file existence, and parameter reproducibility.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| GqaError::io(path, e))?;
        let mut m: Manifest =
            serde_json::from_str(&text).map_err(|e| GqaError::Manifest(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(GqaError::Manifest(format!("unsupported format version {}", self.format_version)));
        }
        for r in &self.references {
            self.check_exists(&r.path)?;
        }
        for list in &self.lists {
            let reference = self
                .reference(&list.reference)
                .ok_or_else(|| GqaError::Manifest(format!("list {} names unknown reference {}", list.id, list.reference)))?;
            for (pos, item) in list.items.iter().enumerate() {
                self.check_exists(&item.path)?;
                if pos > 0 && item.level <= list.items[pos - 1].level {
                    return Err(GqaError::Manifest(format!("list {} levels not increasing", list.id)));
                }
                if let Some(p) = item.pseudo_mos {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(GqaError::Manifest(format!("list {} level {}: pseudo-MOS {p} outside [0, 1]", list.id, item.level)));
                    }
                }
                if item.level == 0 || !list.dtype.is_generatable() {
                    continue;
                }
                let expected = level_param(list.dtype, item.level, reference.edge_length, self.levels)?;
                if expected != item.params {
                    return Err(GqaError::Manifest(format!(
                        "list {} level {}: parameters do not match the level schedule",
                        list.id, item.level
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_exists(&self, rel: &str) -> Result<()> {
        if self.resolve(rel).is_file() {
            Ok(())
        } else {
            Err(GqaError::Manifest(format!("missing file {rel}")))
        }
    }

    pub fn reference(&self, id: &str) -> Option<&ReferenceEntry> {
        self.references.iter().find(|r| r.id == id)
    }

    pub fn load_item(&self, item: &LevelEntry) -> Result<PointCloud> {
        load_path(&self.resolve(&item.path))
    }

    pub fn load_reference(&self, id: &str) -> Result<PointCloud> {
        let r = self.reference(id).ok_or_else(|| GqaError::Manifest(format!("unknown reference {id}")))?;
        load_path(&self.resolve(&r.path))
    }

    /// Number of distinct cloud files the manifest points to.
    pub fn file_count(&self) -> usize {
        let mut paths: Vec<&str> = self.references.iter().map(|r| r.path.as_str()).collect();
        paths.extend(self.lists.iter().flat_map(|l| l.items.iter().map(|i| i.path.as_str())));
        paths.sort_unstable();
        paths.dedup();
        paths.len()
    }

    /// Reference ids in manifest order.
    pub fn reference_ids(&self) -> Vec<String> {
        self.references.iter().map(|r| r.id.clone()).collect()
    }
}

pub(crate) fn load_path(path: &Path) -> Result<PointCloud> {
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| GqaError::Manifest(format!("cannot infer cloud format of {}", path.display())))?;
    load_cloud(path, format)
}

/// `path` relative to `root`, with `/` separators.
pub(crate) fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}
