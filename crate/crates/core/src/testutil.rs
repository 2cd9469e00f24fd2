//! Shared helpers for unit tests.

use rand::Rng;

use crate::cloud::{Point3, PointCloud};
use crate::rng::Seed;

pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = Seed(seed).rng(0);
    let pts = (0..n).map(|_| Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>())).collect();
    PointCloud::new(pts).unwrap()
}

/// Points on the unit sphere (Gaussian direction sampling).
pub fn sphere_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = Seed(seed).rng(1);
    let normal = rand_distr::StandardNormal;
    let pts = (0..n)
        .map(|_| {
            let v = Point3::new(rng.sample(normal), rng.sample(normal), rng.sample(normal));
            v.normalized().unwrap()
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

pub fn brute_knn(points: &[Point3], q: Point3, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (q.dist2(*p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn brute_ball(points: &[Point3], q: Point3, r: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| q.dist2(points[i]) < r * r).collect()
}
