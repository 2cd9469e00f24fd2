use rand::Rng;

use super::PointCloud;
use crate::error::{GqaError, Result};
use crate::rng::Seed;

/// Farthest point sampling.
///
/// The first index is drawn uniformly from `seed`; each following index
/// maximizes the distance to the already chosen set, ties going to the lowest index.
pub fn fps(cloud: &PointCloud, count: usize, seed: Seed) -> Result<Vec<usize>> {
    let pts = cloud.points();
    if count > pts.len() {
        return Err(GqaError::InvalidArgument(format!("cannot sample {count} anchors from {} points", pts.len())));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let first = seed.rng(0).random_range(0..pts.len());
    let mut chosen = Vec::with_capacity(count);
    chosen.push(first);
    let mut min_d2: Vec<f64> = pts.iter().map(|p| p.dist2(pts[first])).collect();
    while chosen.len() < count {
        let mut best = 0;
        for i in 1..pts.len() {
            if min_d2[i] > min_d2[best] {
                best = i;
            }
        }
        chosen.push(best);
        let anchor = pts[best];
        for (d, p) in min_d2.iter_mut().zip(pts) {
            *d = d.min(p.dist2(anchor));
        }
    }
    Ok(chosen)
}
