use rand::seq::index::sample;
use rand_distr::{Distribution, Exp, Normal, Uniform};

use super::kind::{BaseKind, BaseParam};
use crate::cloud::{bucket_by_cell, Point3, PointCloud};
use crate::error::{GqaError, Result};
use crate::rng::Seed;

/// Fraction of points receiving each sign of impulse noise.
pub const IMPULSE_FRACTION: f64 = 0.1;

fn strip(cloud: &PointCloud) -> PointCloud {
    let mut c = cloud.clone();
    c.clear_normals();
    c
}

fn offset_each<D: Distribution<f64>>(cloud: &PointCloud, dist: D, seed: Seed) -> Result<PointCloud> {
    let mut rng = seed.rng(0);
    let points = cloud
        .points()
        .iter()
        .map(|&p| {
            let dx = dist.sample(&mut rng);
            let dy = dist.sample(&mut rng);
            let dz = dist.sample(&mut rng);
            p + Point3::new(dx, dy, dz)
        })
        .collect();
    PointCloud::new(points)
}

pub fn apply_gaussian(cloud: &PointCloud, sigma: f64, seed: Seed) -> Result<PointCloud> {
    if !(sigma >= 0.0) {
        return Err(GqaError::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(strip(cloud));
    }
    offset_each(cloud, Normal::new(0.0, sigma).expect("valid sigma"), seed)
}

pub fn apply_uniform(cloud: &PointCloud, half_range: f64, seed: Seed) -> Result<PointCloud> {
    if !(half_range >= 0.0) {
        return Err(GqaError::InvalidArgument(format!("half range must be >= 0, got {half_range}")));
    }
    if half_range == 0.0 {
        return Ok(strip(cloud));
    }
    offset_each(cloud, Uniform::new_inclusive(-half_range, half_range).expect("valid range"), seed)
}

/// Offsets one random 10% of the points by `+intensity` on every coordinate and a
/// disjoint 10% by `-intensity`.
pub fn apply_impulse(cloud: &PointCloud, intensity: f64, seed: Seed) -> Result<PointCloud> {
    let n = cloud.len();
    let m = (IMPULSE_FRACTION * n as f64).floor() as usize;
    if m == 0 {
        return Err(GqaError::InvalidArgument(format!("impulse noise needs at least 10 points, cloud has {n}")));
    }
    let chosen = sample(&mut seed.rng(0), n, 2 * m).into_vec();
    let mut points = cloud.points().to_vec();
    let shift = Point3::new(intensity, intensity, intensity);
    for &i in &chosen[..m] {
        points[i] = points[i] + shift;
    }
    for &i in &chosen[m..] {
        points[i] = points[i] - shift;
    }
    PointCloud::new(points)
}

/// Adds a positive `Exp(mean)` offset to every coordinate.
pub fn apply_exponential(cloud: &PointCloud, mean: f64, seed: Seed) -> Result<PointCloud> {
    if !(mean > 0.0) {
        return Err(GqaError::InvalidArgument(format!("exponential mean must be > 0, got {mean}")));
    }
    offset_each(cloud, Exp::new(1.0 / mean).expect("positive rate"), seed)
}

/// Snaps points to the centers of cubic cells of edge `resolution` (grid anchored at
/// the min corner) and merges duplicates, keeping first-occurrence order.
pub fn apply_octree_compress(cloud: &PointCloud, resolution: f64) -> Result<PointCloud> {
    if !(resolution > 0.0) {
        return Err(GqaError::InvalidArgument(format!("resolution must be > 0, got {resolution}")));
    }
    let (lo, _) = cloud.bounds();
    let mut seen = std::collections::HashSet::new();
    let mut points = Vec::new();
    for &p in cloud.points() {
        let cell = crate::cloud::grid_cell(p, lo, resolution);
        if seen.insert(cell) {
            points.push(Point3::new(
                lo.x + (cell.0 as f64 + 0.5) * resolution,
                lo.y + (cell.1 as f64 + 0.5) * resolution,
                lo.z + (cell.2 as f64 + 0.5) * resolution,
            ));
        }
    }
    PointCloud::new(points)
}

/// Number of survivors after removing `fraction` of `n` points.
pub fn survivor_count(n: usize, fraction: f64) -> usize {
    // the epsilon absorbs representation error, e.g. (1 - 0.7) * 1000 = 300.00000000000006
    let keep = ((1.0 - fraction) * n as f64 - 1e-9).ceil();
    (keep.max(1.0) as usize).min(n)
}

/// Keeps a uniformly random subset of `⌈(1 - fraction) n⌉` points in their original order.
pub fn apply_random_downsample(cloud: &PointCloud, fraction_removed: f64, seed: Seed) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&fraction_removed) {
        return Err(GqaError::InvalidArgument(format!("removed fraction must be in [0, 1), got {fraction_removed}")));
    }
    let keep = survivor_count(cloud.len(), fraction_removed);
    if keep == cloud.len() {
        return Ok(strip(cloud));
    }
    let mut idx = sample(&mut seed.rng(0), cloud.len(), keep).into_vec();
    idx.sort_unstable();
    strip(cloud).select(&idx)
}

/// Keeps, per occupied grid cell, the input point nearest the centroid of the
/// cell's points (ties to the lower index). Survivors stay in input order.
pub fn apply_grid_downsample(cloud: &PointCloud, grid: f64) -> Result<PointCloud> {
    if !(grid > 0.0) {
        return Err(GqaError::InvalidArgument(format!("grid must be > 0, got {grid}")));
    }
    let (lo, _) = cloud.bounds();
    let pts = cloud.points();
    let mut keep: Vec<usize> = bucket_by_cell(pts, lo, grid)
        .values()
        .map(|members| {
            let c = members.iter().fold(Point3::ORIGIN, |a, &i| a + pts[i]) * (1.0 / members.len() as f64);
            let mut best = members[0];
            for &i in &members[1..] {
                if pts[i].dist2(c) < pts[best].dist2(c) {
                    best = i;
                }
            }
            best
        })
        .collect();
    keep.sort_unstable();
    strip(cloud).select(&keep)
}

/// Applies one elementary degradation.
pub fn apply_base(cloud: &PointCloud, param: BaseParam, seed: Seed) -> Result<PointCloud> {
    match param.kind {
        BaseKind::Gaussian => apply_gaussian(cloud, param.value, seed),
        BaseKind::Uniform => apply_uniform(cloud, param.value, seed),
        BaseKind::Impulse => apply_impulse(cloud, param.value, seed),
        BaseKind::Exponential => apply_exponential(cloud, param.value, seed),
        BaseKind::Octree => apply_octree_compress(cloud, param.value),
        BaseKind::RandomDownsample => apply_random_downsample(cloud, param.value, seed),
        BaseKind::GridDownsample => apply_grid_downsample(cloud, param.value),
    }
}

/// Sub-seed used for step `step` of a (possibly composite) degradation.
pub fn step_seed(seed: Seed, step: usize) -> Seed {
    seed.derive(&[0x5354_4550, step as u64])
}

/// Applies `first`, then `second`, each with its own sub-seed.
pub fn apply_combo(cloud: &PointCloud, first: BaseParam, second: BaseParam, seed: Seed) -> Result<PointCloud> {
    apply_chain(cloud, &[first, second], seed)
}

/// Applies a chain of elementary degradations in order.
pub fn apply_chain(cloud: &PointCloud, params: &[BaseParam], seed: Seed) -> Result<PointCloud> {
    let mut out = strip(cloud);
    for (step, &p) in params.iter().enumerate() {
        out = apply_base(&out, p, step_seed(seed, step))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_cloud;

    fn offsets(a: &PointCloud, b: &PointCloud) -> Vec<Point3> {
        a.points().iter().zip(b.points()).map(|(p, q)| *q - *p).collect()
    }

    fn axis_stats(d: &[Point3], axis: usize) -> (f64, f64, f64) {
        let v: Vec<f64> = d.iter().map(|p| p.coord(axis)).collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let max_abs = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        (mean, var.sqrt(), max_abs)
    }

    #[test]
    fn zero_magnitude_noise_is_identity() {
        let c = random_cloud(100, 1);
        assert_eq!(apply_gaussian(&c, 0.0, Seed(1)).unwrap().points(), c.points());
        assert_eq!(apply_uniform(&c, 0.0, Seed(1)).unwrap().points(), c.points());
        assert_eq!(apply_impulse(&c, 0.0, Seed(1)).unwrap().points(), c.points());
        assert_eq!(apply_random_downsample(&c, 0.0, Seed(1)).unwrap().points(), c.points());
    }

    #[test]
    fn gaussian_statistics_and_determinism() {
        let c = random_cloud(10_000, 2);
        let out = apply_gaussian(&c, 0.5, Seed(3)).unwrap();
        assert_eq!(out.len(), c.len());
        let d = offsets(&c, &out);
        for axis in 0..3 {
            let (_, sd, _) = axis_stats(&d, axis);
            assert!((0.48..=0.52).contains(&sd), "axis {axis}: {sd}");
        }
        assert_eq!(out, apply_gaussian(&c, 0.5, Seed(3)).unwrap());
        assert_ne!(out, apply_gaussian(&c, 0.5, Seed(4)).unwrap());
    }

    #[test]
    fn uniform_statistics() {
        let c = random_cloud(10_000, 4);
        let h = 0.3;
        let d = offsets(&c, &apply_uniform(&c, h, Seed(5)).unwrap());
        for axis in 0..3 {
            let (mean, _, max_abs) = axis_stats(&d, axis);
            assert!(max_abs <= h + 1e-12 && max_abs >= 0.99 * h);
            assert!(mean.abs() <= 0.01 * h);
        }
    }

    #[test]
    fn impulse_exact_counts_and_disjoint_subsets() {
        let c = random_cloud(100, 6);
        let out = apply_impulse(&c, 0.25, Seed(7)).unwrap();
        let d = offsets(&c, &out);
        let untouched = d.iter().filter(|p| **p == Point3::ORIGIN).count();
        // (p + s) - p can differ from s in the last bit
        let near = |v: f64, t: f64| (v - t).abs() < 1e-12;
        let plus_l = d.iter().filter(|p| near(p.x, 0.25) && near(p.y, 0.25) && near(p.z, 0.25)).count();
        let minus_l = d.iter().filter(|p| near(p.x, -0.25) && near(p.y, -0.25) && near(p.z, -0.25)).count();
        assert_eq!((plus_l, minus_l, untouched), (10, 10, 80));
        assert!(apply_impulse(&random_cloud(9, 1), 1.0, Seed(1)).is_err());
    }

    #[test]
    fn impulse_subsets_disjoint_over_seeds() {
        for s in 0..100 {
            let n = 57;
            let m = 5;
            let chosen = sample(&mut Seed(s).rng(0), n, 2 * m).into_vec();
            let pos: std::collections::HashSet<_> = chosen[..m].iter().collect();
            assert!(chosen[m..].iter().all(|i| !pos.contains(i)));
        }
    }

    #[test]
    fn exponential_positive_with_expected_mean() {
        let c = random_cloud(10_000, 8);
        let out = apply_exponential(&c, 0.3, Seed(9)).unwrap();
        let d = offsets(&c, &out);
        assert!(d.iter().all(|p| p.x >= 0.0 && p.y >= 0.0 && p.z >= 0.0));
        for axis in 0..3 {
            let (mean, _, _) = axis_stats(&d, axis);
            assert!((0.29..=0.31).contains(&mean), "{mean}");
        }
        assert_eq!(out, apply_exponential(&c, 0.3, Seed(9)).unwrap());
        assert!(apply_exponential(&c, 0.0, Seed(9)).is_err());
    }

    #[test]
    fn octree_fine_grid_preserves_count_with_bounded_shift() {
        let c = random_cloud(300, 10);
        let res = 1e-4;
        let out = apply_octree_compress(&c, res).unwrap();
        assert_eq!(out.len(), c.len());
        let max_shift = c.points().iter().zip(out.points()).map(|(a, b)| a.dist(*b)).fold(0.0, f64::max);
        assert!(max_shift <= 3f64.sqrt() / 2.0 * res + 1e-15);
    }

    #[test]
    fn octree_merges_and_outputs_lattice_points() {
        let two = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.1, 0.1, 0.1)]).unwrap();
        assert_eq!(apply_octree_compress(&two, 1.0).unwrap().len(), 1);
        let c = random_cloud(2000, 11);
        let res = 0.07;
        let (lo, _) = c.bounds();
        let out = apply_octree_compress(&c, res).unwrap();
        assert!(out.len() <= c.len());
        for p in out.points() {
            for axis in 0..3 {
                let u = (p.coord(axis) - lo.coord(axis)) / res - 0.5;
                assert!((u - u.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_downsample_counts_and_membership() {
        let c = random_cloud(1000, 12);
        let out = apply_random_downsample(&c, 0.7, Seed(1)).unwrap();
        assert_eq!(out.len(), 300);
        let all: std::collections::HashSet<[u64; 3]> =
            c.points().iter().map(|p| p.to_array().map(f64::to_bits)).collect();
        assert!(out.points().iter().all(|p| all.contains(&p.to_array().map(f64::to_bits))));
        assert!(apply_random_downsample(&c, 1.0, Seed(1)).is_err());
    }

    #[test]
    fn random_downsample_seed_sensitivity() {
        let c = random_cloud(1000, 13);
        let sets: Vec<PointCloud> = (0..20).map(|s| apply_random_downsample(&c, 0.5, Seed(s)).unwrap()).collect();
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                assert_ne!(sets[a], sets[b]);
            }
        }
    }

    #[test]
    fn grid_downsample_picks_point_nearest_centroid() {
        // three points in one cell: centroid (0.2, 0, 0); the middle one is nearest
        let c = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.25, 0.0, 0.0),
            Point3::new(0.35, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(apply_grid_downsample(&c, 1.0).unwrap().points(), &[Point3::new(0.25, 0.0, 0.0)]);
        // two points are equidistant from their centroid: the lower index survives
        let pair = PointCloud::new(vec![Point3::new(0.5, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert_eq!(apply_grid_downsample(&pair, 1.0).unwrap().points(), &[Point3::new(0.5, 0.0, 0.0)]);
    }

    #[test]
    fn grid_downsample_counts() {
        let c = random_cloud(1000, 14);
        assert_eq!(apply_grid_downsample(&c, 1e-4).unwrap().len(), c.len());
        let (lo, _) = c.bounds();
        let cells: std::collections::HashSet<_> =
            c.points().iter().map(|&p| crate::cloud::grid_cell(p, lo, 0.2)).collect();
        assert_eq!(apply_grid_downsample(&c, 0.2).unwrap().len(), cells.len());
    }

    #[test]
    fn combo_is_sequential_composition() {
        let c = random_cloud(500, 15);
        let oc = BaseParam { kind: BaseKind::Octree, value: 0.01 };
        let gn = BaseParam { kind: BaseKind::Gaussian, value: 0.02 };
        let seed = Seed(77);
        let got = apply_combo(&c, oc, gn, seed).unwrap();
        let manual = apply_gaussian(&apply_octree_compress(&c, 0.01).unwrap(), 0.02, step_seed(seed, 1)).unwrap();
        assert_eq!(got, manual);
        let reversed = apply_combo(&c, gn, oc, seed).unwrap();
        assert_ne!(got, reversed);
        let zero = apply_combo(
            &c,
            BaseParam { kind: BaseKind::Gaussian, value: 0.0 },
            BaseParam { kind: BaseKind::Uniform, value: 0.0 },
            seed,
        )
        .unwrap();
        assert_eq!(zero.points(), c.points());
    }

    #[test]
    fn combo_variance_adds() {
        let c = random_cloud(10_000, 16);
        let (sigma, h) = (0.1, 0.2);
        let out = apply_combo(
            &c,
            BaseParam { kind: BaseKind::Gaussian, value: sigma },
            BaseParam { kind: BaseKind::Uniform, value: h },
            Seed(3),
        )
        .unwrap();
        let d = offsets(&c, &out);
        let expected = sigma * sigma + h * h / 3.0;
        for axis in 0..3 {
            let (_, sd, _) = axis_stats(&d, axis);
            assert!((sd * sd - expected).abs() / expected < 0.05);
        }
    }
}
