use nalgebra::{Matrix3, SymmetricEigen};

use super::{NeighborIndex, Point3, PointCloud};
use crate::error::{GqaError, Result};

pub const DEFAULT_NORMAL_K: usize = 16;

/// Relative eigenvalue threshold below which a neighborhood counts as rank-deficient.
const RANK_TOL: f64 = 1e-10;

const FALLBACK_NORMAL: Point3 = Point3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// `true` where the neighborhood covariance had rank < 2 and the fallback normal was used.
    pub degenerate: Vec<bool>,
}

impl NormalEstimate {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// PCA normals: the smallest-eigenvalue eigenvector of each point's k-neighborhood covariance.
///
/// The neighborhood is the point itself plus its `k` nearest other points.
/// Orientation is arbitrary.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    estimate_normals_with(cloud, &cloud.index(), k)
}

pub fn estimate_normals_with(cloud: &PointCloud, index: &NeighborIndex, k: usize) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(GqaError::InvalidArgument(format!("normal neighborhood k must be >= 3, got {k}")));
    }
    if cloud.len() < k + 1 {
        return Err(GqaError::InvalidArgument(format!(
            "normal estimation with k = {k} needs at least {} points, cloud has {}",
            k + 1,
            cloud.len()
        )));
    }
    let mut normals = Vec::with_capacity(cloud.len());
    let mut degenerate = Vec::with_capacity(cloud.len());
    for &p in cloud.points() {
        let nbrs = index.knn(p, k + 1)?;
        match plane_normal(nbrs.iter().map(|&j| cloud.points()[j])) {
            Some(n) => {
                normals.push(n);
                degenerate.push(false);
            }
            None => {
                normals.push(FALLBACK_NORMAL);
                degenerate.push(true);
            }
        }
    }
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(NormalEstimate { cloud: out, degenerate })
}

/// Least-variance direction of a point set, `None` if the covariance has rank < 2.
fn plane_normal(points: impl Iterator<Item = Point3> + Clone) -> Option<Point3> {
    let n = points.clone().count() as f64;
    let mean = points.clone().fold(Point3::ORIGIN, |a, p| a + p) * (1.0 / n);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - mean;
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= RANK_TOL * largest {
        return None;
    }
    let v = eig.eigenvectors.column(order[0]);
    Point3::new(v[0], v[1], v[2]).normalized()
}
