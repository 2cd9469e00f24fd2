//! Point-cloud representation and the geometric primitives every other module builds on.

mod fps;
mod io;
mod kdtree;
mod normals;
mod point;

use std::collections::BTreeMap;

pub use fps::fps;
pub use io::{load_cloud, save_cloud, CloudFormat};
pub use kdtree::NeighborIndex;
pub use normals::{estimate_normals, estimate_normals_with as estimate_normals_with_index, NormalEstimate, DEFAULT_NORMAL_K};
pub use point::Point3;

use crate::error::{GqaError, Result};

const UNIT_NORMAL_TOL: f64 = 1e-6;

/// Ordered list of points with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Point3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(GqaError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GqaError::InvalidArgument(format!("point {i} is not finite")));
        }
        Ok(PointCloud { points, normals: None })
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Point3>) -> Result<Self> {
        let mut cloud = PointCloud::new(points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub fn set_normals(&mut self, normals: Vec<Point3>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(GqaError::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > UNIT_NORMAL_TOL) {
            return Err(GqaError::InvalidArgument(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn clear_normals(&mut self) {
        self.normals = None;
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.points.iter().fold(Point3::ORIGIN, |acc, &p| acc + p);
        sum * (1.0 / self.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Point3, Point3) {
        let first = self.points[0];
        self.points.iter().fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.dist(hi)
    }

    /// Applies `f` to every point, keeping normals untouched.
    pub fn map_points(&self, f: impl FnMut(Point3) -> Point3) -> Result<PointCloud> {
        let points: Vec<Point3> = self.points.iter().copied().map(f).collect();
        let mut out = PointCloud::new(points)?;
        out.normals = self.normals.clone();
        Ok(out)
    }

    /// Cloud made of the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let mut out = PointCloud::new(points)?;
        if let Some(ns) = &self.normals {
            out.normals = Some(indices.iter().map(|&i| ns[i]).collect());
        }
        Ok(out)
    }

    pub fn index(&self) -> NeighborIndex {
        NeighborIndex::build(&self.points)
    }
}

/// Translates the centroid to the origin and scales so the farthest point lies on the unit sphere.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let radius = cloud.points.iter().map(|p| p.dist(c)).fold(0.0, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };
    let points = cloud.points.iter().map(|&p| (p - c) * scale).collect();
    PointCloud { points, normals: cloud.normals.clone() }
}

/// Mean distance from each point to its nearest other point.
pub fn avg_nn_edge_length(cloud: &PointCloud) -> Result<f64> {
    avg_nn_edge_length_with(cloud, &cloud.index())
}

pub fn avg_nn_edge_length_with(cloud: &PointCloud, index: &NeighborIndex) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(GqaError::InvalidArgument("average edge length needs at least 2 points".into()));
    }
    let total: f64 = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let nn = index.knn(p, 2).expect("k=2 <= len");
            let j = if nn[0] == i { nn[1] } else { nn[0] };
            p.dist(cloud.points[j])
        })
        .sum();
    Ok(total / cloud.len() as f64)
}

/// Integer cell coordinates of `p` in a grid of edge `cell` anchored at `origin`.
#[inline]
pub(crate) fn grid_cell(p: Point3, origin: Point3, cell: f64) -> (i64, i64, i64) {
    (
        ((p.x - origin.x) / cell).floor() as i64,
        ((p.y - origin.y) / cell).floor() as i64,
        ((p.z - origin.z) / cell).floor() as i64,
    )
}

/// Groups point indices by grid cell, cells in lexicographic order.
pub(crate) fn bucket_by_cell(points: &[Point3], origin: Point3, cell: f64) -> BTreeMap<(i64, i64, i64), Vec<usize>> {
    let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(grid_cell(p, origin, cell)).or_default().push(i);
    }
    cells
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// The grid is anchored at the cloud's minimum corner; output points follow
/// lexicographic voxel order. Normals are dropped.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) {
        return Err(GqaError::InvalidArgument(format!("voxel size must be positive, got {voxel}")));
    }
    let (lo, _) = cloud.bounds();
    let cells = bucket_by_cell(&cloud.points, lo, voxel);
    let points = cells
        .values()
        .map(|idx| {
            let sum = idx.iter().fold(Point3::ORIGIN, |acc, &i| acc + cloud.points[i]);
            sum * (1.0 / idx.len() as f64)
        })
        .collect();
    PointCloud::new(points)
}
