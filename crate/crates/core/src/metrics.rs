//! Full-reference geometry metrics and the pseudo-MOS built on them.
//!
//! Directional errors are computed from every point of `A` to its nearest
//! neighbor in `B`. Point-to-plane projects that offset on the neighbor's
//! normal; plane-to-plane compares the two tangent planes by angle.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cloud::{estimate_normals_with_index, NeighborIndex, Point3, PointCloud, DEFAULT_NORMAL_K};
use crate::error::{GqaError, Result};
use crate::eval::Ranking;

/// Per-point non-negative errors of one direction `A -> B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVector(Vec<f64>);

impl ErrorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GqaError::InvalidArgument("errors must be finite and non-negative".into()));
        }
        Ok(ErrorVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ErrorVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn nearest(index: &NeighborIndex, p: Point3) -> usize {
    index.knn(p, 1).expect("index is non-empty")[0]
}

pub fn po2po_errors(a: &PointCloud, b: &PointCloud) -> Result<ErrorVector> {
    po2po_errors_with(a, &b.index())
}

pub fn po2po_errors_with(a: &PointCloud, b_index: &NeighborIndex) -> Result<ErrorVector> {
    let bp = b_index.points();
    Ok(ErrorVector(a.points().iter().map(|&p| p.dist(bp[nearest(b_index, p)])).collect()))
}

/// `|(a_i - nn_B(a_i)) . n_nn|`; `b` must carry normals.
pub fn po2pl_errors(a: &PointCloud, b: &PointCloud) -> Result<ErrorVector> {
    po2pl_errors_with(a, b, &b.index())
}

pub fn po2pl_errors_with(a: &PointCloud, b: &PointCloud, b_index: &NeighborIndex) -> Result<ErrorVector> {
    let normals = b.normals().ok_or(GqaError::MissingNormals)?;
    let bp = b.points();
    Ok(ErrorVector(
        a.points()
            .iter()
            .map(|&p| {
                let j = nearest(b_index, p);
                (p - bp[j]).dot(normals[j]).abs()
            })
            .collect(),
    ))
}

/// Angular similarity `1 - 2 acos(|n_a . n_b|) / pi` between each point's normal and its
/// nearest neighbor's normal in `b`. Both clouds must carry normals.
pub fn pl2pl_similarity(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    pl2pl_similarity_with(a, b, &b.index())
}

pub fn pl2pl_similarity_with(a: &PointCloud, b: &PointCloud, b_index: &NeighborIndex) -> Result<Vec<f64>> {
    let na = a.normals().ok_or(GqaError::MissingNormals)?;
    let nb = b.normals().ok_or(GqaError::MissingNormals)?;
    Ok(a.points()
        .iter()
        .zip(na)
        .map(|(&p, &n)| angular_similarity(n, nb[nearest(b_index, p)]))
        .collect())
}

#[inline]
pub fn angular_similarity(u: Point3, v: Point3) -> f64 {
    // atan2 stays exact for parallel normals, where acos of a rounded dot product does not
    let angle = u.cross(v).norm().atan2(u.dot(v).abs());
    1.0 - 2.0 * angle / std::f64::consts::PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Pooling {
    Mse,
    Hd,
}

pub fn pool(errors: &[f64], mode: Pooling) -> f64 {
    assert!(!errors.is_empty(), "pooling needs at least one error");
    match mode {
        Pooling::Mse => errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64,
        Pooling::Hd => errors.iter().copied().fold(0.0, f64::max),
    }
}

/// `10 log10(peak^2 / mse)`; `+inf` when `mse == 0`.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak / mse).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

/// Symmetric value of two directional values: the worse of the two.
pub fn symmetric(ab: f64, ba: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::LowerIsBetter => ab.max(ba),
        Orientation::HigherIsBetter => ab.min(ba),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    Po2Po,
    Po2Pl,
    Pl2Pl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MetricPooling {
    Mse,
    Hd,
    Psnr,
}

/// A full-reference metric: distance family plus pooling, e.g. `po2po_mse`.
/// Serialized as its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricId {
    pub family: Family,
    pub pooling: MetricPooling,
}

impl MetricId {
    pub const ALL: [MetricId; 9] = {
        use Family::*;
        use MetricPooling::*;
        [
            MetricId { family: Po2Po, pooling: Mse },
            MetricId { family: Po2Po, pooling: Hd },
            MetricId { family: Po2Po, pooling: Psnr },
            MetricId { family: Po2Pl, pooling: Mse },
            MetricId { family: Po2Pl, pooling: Hd },
            MetricId { family: Po2Pl, pooling: Psnr },
            MetricId { family: Pl2Pl, pooling: Mse },
            MetricId { family: Pl2Pl, pooling: Hd },
            MetricId { family: Pl2Pl, pooling: Psnr },
        ]
    };

    pub const PO2PO_MSE: MetricId = MetricId { family: Family::Po2Po, pooling: MetricPooling::Mse };

    pub fn orientation(self) -> Orientation {
        match self.pooling {
            MetricPooling::Psnr => Orientation::HigherIsBetter,
            _ => Orientation::LowerIsBetter,
        }
    }

    pub fn needs_normals(self) -> bool {
        self.family != Family::Po2Po
    }

    pub fn parse_list(s: &str) -> Result<Vec<MetricId>> {
        if s.trim() == "all" {
            return Ok(MetricId::ALL.to_vec());
        }
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Po2Po => "po2po",
            Family::Po2Pl => "po2pl",
            Family::Pl2Pl => "pl2pl",
        };
        let pool = match self.pooling {
            MetricPooling::Mse => "mse",
            MetricPooling::Hd => "hd",
            MetricPooling::Psnr => "psnr",
        };
        write!(f, "{fam}_{pool}")
    }
}

impl FromStr for MetricId {
    type Err = GqaError;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .iter()
            .copied()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| GqaError::Config(format!("unknown metric {s:?}")))
    }
}

impl Serialize for MetricId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricResult {
    pub id: MetricId,
    pub ab: f64,
    pub ba: f64,
    pub symmetric: f64,
    pub orientation: Orientation,
}

/// A cloud with normals and a neighbor index, ready for repeated metric evaluation.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub index: NeighborIndex,
}

impl PreparedCloud {
    /// Estimates normals (`k` neighbors) only when the cloud carries none.
    pub fn new(cloud: &PointCloud, normal_k: usize) -> Result<Self> {
        let index = cloud.index();
        let cloud = if cloud.normals().is_some() {
            cloud.clone()
        } else {
            let k = normal_k.min(cloud.len().saturating_sub(1)).max(3);
            estimate_normals_with_index(cloud, &index, k)?.cloud
        };
        Ok(PreparedCloud { cloud, index })
    }

    pub fn with_default_normals(cloud: &PointCloud) -> Result<Self> {
        Self::new(cloud, DEFAULT_NORMAL_K)
    }
}

fn directional(id: MetricId, a: &PreparedCloud, b: &PreparedCloud, peak: f64) -> Result<f64> {
    let errors: Vec<f64> = match id.family {
        Family::Po2Po => po2po_errors_with(&a.cloud, &b.index)?.into_inner(),
        Family::Po2Pl => po2pl_errors_with(&a.cloud, &b.cloud, &b.index)?.into_inner(),
        Family::Pl2Pl => pl2pl_similarity_with(&a.cloud, &b.cloud, &b.index)?.into_iter().map(|s| 1.0 - s).collect(),
    };
    Ok(match id.pooling {
        MetricPooling::Mse => pool(&errors, Pooling::Mse),
        MetricPooling::Hd => pool(&errors, Pooling::Hd),
        MetricPooling::Psnr => {
            let peak = if id.family == Family::Pl2Pl { 1.0 } else { peak };
            psnr(pool(&errors, Pooling::Mse), peak)
        }
    })
}

/// Evaluates `id` between a reference and a degraded cloud.
///
/// The geometric PSNR peak is the reference bounding-box diagonal; the
/// plane-to-plane PSNR uses peak 1 on the angular error `1 - similarity`.
pub fn evaluate(id: MetricId, reference: &PreparedCloud, degraded: &PreparedCloud) -> Result<MetricResult> {
    let peak = reference.cloud.bbox_diagonal();
    let ab = directional(id, reference, degraded, peak)?;
    let ba = directional(id, degraded, reference, peak)?;
    let orientation = id.orientation();
    Ok(MetricResult { id, ab, ba, symmetric: symmetric(ab, ba, orientation), orientation })
}

/// Mean plane-to-plane similarity averaged over both directions; in `[0, 1]`.
pub fn pseudo_mos_prepared(reference: &PreparedCloud, degraded: &PreparedCloud) -> Result<f64> {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let ab = mean(pl2pl_similarity_with(&reference.cloud, &degraded.cloud, &degraded.index)?);
    let ba = mean(pl2pl_similarity_with(&degraded.cloud, &reference.cloud, &reference.index)?);
    Ok((0.5 * (ab + ba)).clamp(0.0, 1.0))
}

/// Pseudo-MOS of `degraded` against `reference`.
///
/// Reference normals are used when present; degraded normals are always re-estimated.
pub fn pseudo_mos(reference: &PointCloud, degraded: &PointCloud) -> Result<f64> {
    let r = PreparedCloud::with_default_normals(reference)?;
    let mut d = degraded.clone();
    d.clear_normals();
    let d = PreparedCloud::with_default_normals(&d)?;
    pseudo_mos_prepared(&r, &d)
}

/// Orders list items best to worst by metric value; ties keep ascending item index.
pub fn rank_by_metric(values: &[f64], orientation: Orientation) -> Ranking {
    Ranking::from_scores(values, orientation == Orientation::HigherIsBetter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ndcg;
    use crate::testutil::random_cloud;

    fn pc(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&a| a.into()).collect()).unwrap()
    }

    fn with_normal(cloud: PointCloud, n: Point3) -> PointCloud {
        let len = cloud.len();
        let mut c = cloud;
        c.set_normals(vec![n; len]).unwrap();
        c
    }

    #[test]
    fn po2po_basics() {
        let c = random_cloud(50, 1);
        assert!(po2po_errors(&c, &c).unwrap().iter().all(|&e| e == 0.0));
        let e = po2po_errors(&pc(&[[0.0, 0.0, 0.0]]), &pc(&[[1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(&*e, &[1.0]);
    }

    #[test]
    fn po2po_matches_all_pairs_oracle() {
        let (a, b) = (random_cloud(300, 2), random_cloud(300, 3));
        let got = po2po_errors(&a, &b).unwrap();
        for (i, p) in a.points().iter().enumerate() {
            let oracle = b.points().iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min);
            assert_eq!(got[i], oracle);
        }
    }

    #[test]
    fn po2pl_tangent_and_normal_offsets() {
        let b = with_normal(pc(&[[0.0, 0.0, 0.0], [5.0, 5.0, 0.0]]), Point3::new(0.0, 0.0, 1.0));
        let tangent = po2pl_errors(&pc(&[[0.3, 0.1, 0.0]]), &b).unwrap();
        assert_eq!(&*tangent, &[0.0]);
        let normal = po2pl_errors(&pc(&[[0.0, 0.0, 0.5]]), &b).unwrap();
        assert_eq!(&*normal, &[0.5]);
        assert!(matches!(po2pl_errors(&b, &pc(&[[0.0, 0.0, 0.0]])), Err(GqaError::MissingNormals)));
    }

    #[test]
    fn po2pl_never_exceeds_po2po() {
        for s in 0..100 {
            let a = random_cloud(60, 1000 + s);
            let b = PreparedCloud::new(&random_cloud(60, 2000 + s), 8).unwrap();
            let pl = po2pl_errors(&a, &b.cloud).unwrap();
            let po = po2po_errors(&a, &b.cloud).unwrap();
            assert!(pl.iter().zip(po.iter()).all(|(x, y)| *x <= *y + 1e-15));
        }
    }

    #[test]
    fn pl2pl_angles() {
        let z = Point3::new(0.0, 0.0, 1.0);
        assert_eq!(angular_similarity(z, z), 1.0);
        assert_eq!(angular_similarity(z, -z), 1.0);
        assert!(angular_similarity(z, Point3::new(1.0, 0.0, 0.0)).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        assert!((angular_similarity(z, Point3::new(h, 0.0, h)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pooling_and_psnr() {
        assert_eq!(pool(&[1.0, 1.0, 1.0], Pooling::Mse), 1.0);
        assert_eq!(pool(&[0.0, 2.0, 1.0], Pooling::Hd), 2.0);
        let v = [0.3, 0.1, 0.7, 0.2];
        assert!((pool(&v, Pooling::Mse) - (0.09 + 0.01 + 0.49 + 0.04) / 4.0).abs() < 1e-15);
        assert_eq!(psnr(4.0, 2.0), 0.0);
        assert!((psnr(0.04, 2.0) - 20.0).abs() < 1e-12);
        assert!((psnr(0.5, 1.0) - psnr(1.0, 1.0) - 3.0103).abs() < 1e-4);
        assert_eq!(psnr(0.0, 1.0), f64::INFINITY);
        assert!(psnr(0.1, 1.0) > psnr(0.2, 1.0));
    }

    #[test]
    fn symmetric_pooling() {
        assert_eq!(symmetric(0.2, 0.5, Orientation::LowerIsBetter), 0.5);
        assert_eq!(symmetric(0.9, 0.8, Orientation::HigherIsBetter), 0.8);
        assert_eq!(symmetric(0.3, 0.3, Orientation::LowerIsBetter), 0.3);
    }

    #[test]
    fn metric_ids_parse() {
        for m in MetricId::ALL {
            assert_eq!(m.to_string().parse::<MetricId>().unwrap(), m);
        }
        assert_eq!(MetricId::parse_list("all").unwrap().len(), 9);
        assert!("po2po_foo".parse::<MetricId>().is_err());
    }

    #[test]
    fn pseudo_mos_identity_and_orthogonal() {
        let c = random_cloud(300, 5);
        assert_eq!(pseudo_mos(&c, &c).unwrap(), 1.0);
        let plane = random_cloud(200, 6).map_points(|p| Point3::new(p.x, p.y, 0.0)).unwrap();
        let a = PreparedCloud::new(&with_normal(plane.clone(), Point3::new(0.0, 0.0, 1.0)), 16).unwrap();
        let b = PreparedCloud::new(&with_normal(plane, Point3::new(1.0, 0.0, 0.0)), 16).unwrap();
        assert!(pseudo_mos_prepared(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rigid_transform_invariance() {
        let a = random_cloud(200, 7);
        let b = crate::distort::apply_gaussian(&a, 0.02, crate::rng::Seed(1)).unwrap();
        let (s, c) = 0.4f64.sin_cos();
        let rot = |p: Point3| Point3::new(c * p.x - s * p.z, p.y, s * p.x + c * p.z) + Point3::new(0.3, -0.2, 0.1);
        let (ra, rb) = (a.map_points(rot).unwrap(), b.map_points(rot).unwrap());
        // the PSNR peak follows the axis-aligned box, so PSNR is only translation invariant
        for id in MetricId::ALL.into_iter().filter(|m| m.pooling != MetricPooling::Psnr) {
            let before = evaluate(id, &PreparedCloud::new(&a, 8).unwrap(), &PreparedCloud::new(&b, 8).unwrap()).unwrap();
            let after = evaluate(id, &PreparedCloud::new(&ra, 8).unwrap(), &PreparedCloud::new(&rb, 8).unwrap()).unwrap();
            let tol = 1e-9 * before.symmetric.abs().max(1.0);
            assert!((before.symmetric - after.symmetric).abs() <= tol, "{id}: {before:?} vs {after:?}");
        }
        let shift = |p: Point3| p + Point3::new(0.3, -0.2, 0.1);
        let (ta, tb) = (a.map_points(shift).unwrap(), b.map_points(shift).unwrap());
        let id = MetricId { family: Family::Po2Po, pooling: MetricPooling::Psnr };
        let before = evaluate(id, &PreparedCloud::new(&a, 8).unwrap(), &PreparedCloud::new(&b, 8).unwrap()).unwrap();
        let after = evaluate(id, &PreparedCloud::new(&ta, 8).unwrap(), &PreparedCloud::new(&tb, 8).unwrap()).unwrap();
        assert!((before.symmetric - after.symmetric).abs() < 1e-9);
    }

    #[test]
    fn ranking_monotone_metric_sequences() {
        let increasing = [0.0, 0.1, 0.3, 0.35, 0.9];
        let r = rank_by_metric(&increasing, Orientation::LowerIsBetter);
        assert_eq!(ndcg::<f64>(&r).unwrap(), 1.0);
        let decreasing = [f64::INFINITY, 40.0, 30.0, 20.0];
        assert_eq!(ndcg::<f64>(&rank_by_metric(&decreasing, Orientation::HigherIsBetter)).unwrap(), 1.0);
        let ties = [0.5; 6];
        assert_eq!(ndcg::<f64>(&rank_by_metric(&ties, Orientation::LowerIsBetter)).unwrap(), 1.0);
    }
}
