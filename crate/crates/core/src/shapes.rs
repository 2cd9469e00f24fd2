//! Procedural reference shapes for tests, demos and desk-scale experiments.
//!
//! Each shape is sampled densely on its surface, normalized into the unit
//! sphere and voxel-filtered, which gives references of similar density.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cloud::{normalize_unit_sphere, voxel_downsample, Point3, PointCloud};
use crate::error::Result;
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Torus,
    Cube,
    Cylinder,
    Ellipsoid,
    BumpySphere,
    Cone,
    Superquadric,
    Capsule,
    Dumbbell,
}

impl Shape {
    pub const ALL: [Shape; 10] = [
        Shape::Sphere,
        Shape::Torus,
        Shape::Cube,
        Shape::Cylinder,
        Shape::Ellipsoid,
        Shape::BumpySphere,
        Shape::Cone,
        Shape::Superquadric,
        Shape::Capsule,
        Shape::Dumbbell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Torus => "torus",
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Ellipsoid => "ellipsoid",
            Shape::BumpySphere => "bumpy_sphere",
            Shape::Cone => "cone",
            Shape::Superquadric => "superquadric",
            Shape::Capsule => "capsule",
            Shape::Dumbbell => "dumbbell",
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> Point3 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        match self {
            Shape::Sphere => unit_direction(rng),
            Shape::BumpySphere => {
                let d = unit_direction(rng);
                let r = 1.0 + 0.12 * (5.0 * d.x).sin() * (4.0 * d.y).cos() * (3.0 * d.z + 1.0).sin();
                d * r
            }
            Shape::Ellipsoid => {
                let d = unit_direction(rng);
                Point3::new(1.0 * d.x, 0.6 * d.y, 0.4 * d.z)
            }
            Shape::Torus => {
                // rejection sampling for uniform area density
                loop {
                    let (a, b) = (2.0 * PI * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>());
                    let (big, small) = (1.0, 0.35);
                    if rng.random::<f64>() <= (big + small * b.cos()) / (big + small) {
                        let r = big + small * b.cos();
                        return Point3::new(r * a.cos(), r * a.sin(), small * b.sin());
                    }
                }
            }
            Shape::Cube => {
                let face = rng.random_range(0..6);
                let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
                let s = if face % 2 == 0 { 1.0 } else { -1.0 };
                match face / 2 {
                    0 => Point3::new(s, a, b),
                    1 => Point3::new(a, s, b),
                    _ => Point3::new(a, b, s),
                }
            }
            Shape::Cylinder => {
                // side area 2*pi*r*h vs caps 2*pi*r^2 with r = 0.5, h = 2
                let side = 2.0 * PI * 0.5 * 2.0;
                let caps = 2.0 * PI * 0.25;
                let t = 2.0 * PI * v;
                if u * (side + caps) < side {
                    Point3::new(0.5 * t.cos(), 0.5 * t.sin(), 2.0 * rng.random::<f64>() - 1.0)
                } else {
                    let r = 0.5 * rng.random::<f64>().sqrt();
                    let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    Point3::new(r * t.cos(), r * t.sin(), z)
                }
            }
            Shape::Cone => {
                // lateral surface of a cone with base radius 1 and height 1.5, plus the base disk
                let slant = (1.0f64 + 1.5 * 1.5).sqrt();
                let lateral = PI * slant;
                let base = PI;
                let t = 2.0 * PI * v;
                if u * (lateral + base) < lateral {
                    let s = rng.random::<f64>().sqrt();
                    Point3::new(s * t.cos(), s * t.sin(), 1.5 * (1.0 - s))
                } else {
                    let r = rng.random::<f64>().sqrt();
                    Point3::new(r * t.cos(), r * t.sin(), 0.0)
                }
            }
            Shape::Superquadric => {
                // radial projection onto |x|^4 + |y|^4 + |z|^4 = 1 (a rounded box)
                let d = unit_direction(rng);
                let r = (d.x.powi(4) + d.y.powi(4) + d.z.powi(4)).powf(-0.25);
                d * r
            }
            Shape::Capsule => {
                let d = unit_direction(rng);
                if u < 0.5 {
                    let t = 2.0 * PI * v;
                    Point3::new(0.5 * t.cos(), 0.5 * t.sin(), 2.0 * rng.random::<f64>() - 1.0)
                } else {
                    let z = if d.z >= 0.0 { 1.0 } else { -1.0 };
                    Point3::new(0.5 * d.x, 0.5 * d.y, 0.5 * d.z + z)
                }
            }
            Shape::Dumbbell => {
                // two spheres of radius 0.6 joined by a bar of radius 0.25
                if u < 0.7 {
                    let d = unit_direction(rng);
                    let cx = if d.x >= 0.0 { 1.0 } else { -1.0 };
                    Point3::new(0.6 * d.x + cx, 0.6 * d.y, 0.6 * d.z)
                } else {
                    let t = 2.0 * PI * v;
                    Point3::new(2.0 * rng.random::<f64>() - 1.0, 0.25 * t.cos(), 0.25 * t.sin())
                }
            }
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = Point3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if let Some(d) = v.normalized() {
            return d;
        }
    }
}

/// Samples `dense` surface points, normalizes to the unit sphere and voxel-filters with edge `voxel`.
pub fn reference_cloud(shape: Shape, dense: usize, voxel: f64, seed: Seed) -> Result<PointCloud> {
    let mut rng = seed.derive_str(shape.name(), &[]).rng(0);
    let pts: Vec<Point3> = (0..dense).map(|_| shape.sample(&mut rng)).collect();
    let normalized = normalize_unit_sphere(&PointCloud::new(pts)?);
    let filtered = voxel_downsample(&normalized, voxel)?;
    Ok(normalize_unit_sphere(&filtered))
}

/// Default desk-scale reference: at least 5k points after voxel filtering.
pub fn desk_reference(shape: Shape, seed: Seed) -> Result<PointCloud> {
    reference_cloud(shape, 80_000, 0.027, seed)
}
