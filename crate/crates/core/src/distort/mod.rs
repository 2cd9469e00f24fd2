//! Deterministic synthesis of graded geometric distortions.

mod apply;
mod kind;

use std::fs;
use std::path::Path;

pub use apply::*;
pub use kind::{level_param, BaseKind, BaseParam, DistortionType, STANDARD_LEVELS};

use crate::cloud::{avg_nn_edge_length, save_cloud, CloudFormat, PointCloud};
use crate::error::{GqaError, Result};
use crate::manifest::{relative_path, LevelEntry, ListEntry, Manifest, ReferenceEntry};
use crate::rng::Seed;

/// A fully determined degradation.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    pub dtype: DistortionType,
    pub level: usize,
    pub params: Vec<BaseParam>,
    pub seed: Seed,
}

impl DistortionSpec {
    pub fn new(dtype: DistortionType, level: usize, levels: usize, edge_length: f64, seed: Seed) -> Result<Self> {
        let params = level_param(dtype, level, edge_length, levels)?;
        Ok(DistortionSpec { dtype, level, params, seed })
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        apply_chain(cloud, &self.params, self.seed)
    }
}

/// Seed of level `level` of a `dtype` list generated from `seed`.
pub fn level_seed(seed: Seed, dtype: DistortionType, level: usize) -> Seed {
    seed.derive_str(dtype.tag(), &[level as u64])
}

#[derive(Debug, Clone)]
pub struct ListItem {
    pub cloud: PointCloud,
    pub level: usize,
    /// `None` for the pristine item.
    pub spec: Option<DistortionSpec>,
}

/// A pristine cloud and its degraded versions, best quality first.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub reference: PointCloud,
    pub dtype: DistortionType,
    pub items: Vec<ListItem>,
}

impl RankedList {
    /// Ground-truth rank of every item: its distortion level.
    pub fn ranks(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.level).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Builds the `levels + 1` item list for one reference and distortion type.
pub fn generate_list(reference: &PointCloud, dtype: DistortionType, levels: usize, seed: Seed) -> Result<RankedList> {
    if !dtype.is_generatable() {
        return Err(GqaError::ExternalOnlyDistortion(dtype.tag().into()));
    }
    let edge = avg_nn_edge_length(reference)?;
    generate_list_with_edge(reference, dtype, levels, edge, seed)
}

pub fn generate_list_with_edge(
    reference: &PointCloud,
    dtype: DistortionType,
    levels: usize,
    edge_length: f64,
    seed: Seed,
) -> Result<RankedList> {
    let mut items = Vec::with_capacity(levels + 1);
    items.push(ListItem { cloud: reference.clone(), level: 0, spec: None });
    for level in 1..=levels {
        let spec = DistortionSpec::new(dtype, level, levels, edge_length, level_seed(seed, dtype, level))?;
        let cloud = spec.apply(reference)?;
        items.push(ListItem { cloud, level, spec: Some(spec) });
    }
    Ok(RankedList { reference: reference.clone(), dtype, items })
}

/// Synthesizes every `(reference, dtype)` list under `out_dir` and returns the manifest.
///
/// Layout: `refs/<id>.ply` for pristine clouds (stored once per reference) and
/// `<id>/<DTYPE>/level_<nn>.ply` for degraded ones. The manifest itself is
/// written to `out_dir/manifest.json`.
pub fn generate_dataset(
    references: &[(String, PointCloud)],
    dtypes: &[DistortionType],
    levels: usize,
    out_dir: &Path,
    seed: Seed,
) -> Result<Manifest> {
    if let Some(d) = dtypes.iter().find(|d| !d.is_generatable()) {
        return Err(GqaError::ExternalOnlyDistortion(d.tag().into()));
    }
    if levels == 0 {
        return Err(GqaError::InvalidArgument("at least one distortion level required".into()));
    }
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| GqaError::io(p, e));
    mkdir(&out_dir.join("refs"))?;
    let mut manifest = Manifest::new("gqa-dataset", seed.0, levels, out_dir);
    for (id, reference) in references {
        let ref_path = out_dir.join("refs").join(format!("{id}.ply"));
        save_cloud(reference, &ref_path, CloudFormat::PlyAscii)?;
        let edge = avg_nn_edge_length(reference)?;
        let ref_rel = relative_path(out_dir, &ref_path);
        manifest.references.push(ReferenceEntry {
            id: id.clone(),
            path: ref_rel.clone(),
            edge_length: edge,
            point_count: reference.len(),
        });
        let ref_seed = seed.derive_str(id, &[]);
        for &dtype in dtypes {
            let list = generate_list_with_edge(reference, dtype, levels, edge, ref_seed)?;
            let dir = out_dir.join(id).join(dtype.tag());
            mkdir(&dir)?;
            let mut entries = vec![LevelEntry { level: 0, path: ref_rel.clone(), params: Vec::new(), seed: None, pseudo_mos: None }];
            for item in &list.items[1..] {
                let spec = item.spec.as_ref().expect("degraded items carry a spec");
                let path = dir.join(format!("level_{:02}.ply", item.level));
                save_cloud(&item.cloud, &path, CloudFormat::PlyAscii)?;
                entries.push(LevelEntry {
                    level: item.level,
                    path: relative_path(out_dir, &path),
                    params: spec.params.clone(),
                    seed: Some(spec.seed.0),
                    pseudo_mos: None,
                });
            }
            manifest.lists.push(ListEntry { id: format!("{id}/{}", dtype.tag()), reference: id.clone(), dtype, items: entries });
        }
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
