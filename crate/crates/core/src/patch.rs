//! Fixed-size local patches around FPS anchors.
//!
//! Anchors are sampled once on the reference and reused, as coordinates, for
//! every degraded version of it so patches of one list cover the same regions.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::cloud::{fps, NeighborIndex, Point3, PointCloud};
use crate::error::{GqaError, Result};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Number of anchors `N`.
    pub count: usize,
    pub radius: f64,
    /// Points per patch `n`.
    pub points: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig { count: 64, radius: 0.2, points: 512 }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.points == 0 || !(self.radius > 0.0) {
            return Err(GqaError::Config(format!("invalid patch config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Point3>,
    pub seed: Seed,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// `n` points relative to the anchor. Pads are anchor copies, i.e. origin points.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub coords: Vec<Point3>,
    pub anchor: Point3,
    pub pad_count: usize,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

pub fn generate_anchors(reference: &PointCloud, count: usize, seed: Seed) -> Result<AnchorSet> {
    let idx = fps(reference, count, seed)?;
    Ok(AnchorSet { anchors: idx.iter().map(|&i| reference.points()[i]).collect(), seed })
}

fn make_patch(points: &[Point3], mut members: Vec<usize>, anchor: Point3, n: usize, seed: Seed) -> Patch {
    if members.len() > n {
        let mut keep = sample(&mut seed.rng(0), members.len(), n).into_vec();
        keep.sort_unstable();
        members = keep.into_iter().map(|k| members[k]).collect();
    }
    let pad_count = n - members.len();
    let mut coords: Vec<Point3> = members.iter().map(|&i| points[i] - anchor).collect();
    coords.resize(n, Point3::ORIGIN);
    Patch { coords, anchor, pad_count }
}

pub fn extract_patches(cloud: &PointCloud, anchors: &AnchorSet, radius: f64, n: usize, seed: Seed) -> Result<PatchSet> {
    extract_patches_with(&cloud.index(), anchors, radius, n, seed)
}

pub fn extract_patches_with(
    index: &NeighborIndex,
    anchors: &AnchorSet,
    radius: f64,
    n: usize,
    seed: Seed,
) -> Result<PatchSet> {
    if !(radius > 0.0) || n == 0 {
        return Err(GqaError::InvalidArgument(format!("radius {radius}, n {n}")));
    }
    let patches = anchors
        .anchors
        .iter()
        .enumerate()
        .map(|(i, &a)| make_patch(index.points(), index.ball_query(a, radius), a, n, seed.derive(&[i as u64])))
        .collect();
    Ok(PatchSet { patches })
}

/// Single patch of `n` points drawn from the whole cloud, centered at its centroid.
/// Used by the no-patching ablation.
pub fn whole_cloud_patch(cloud: &PointCloud, n: usize, seed: Seed) -> Result<PatchSet> {
    if n == 0 {
        return Err(GqaError::InvalidArgument("n must be >= 1".into()));
    }
    let patch = make_patch(cloud.points(), (0..cloud.len()).collect(), cloud.centroid(), n, seed.derive(&[0]));
    Ok(PatchSet { patches: vec![patch] })
}
