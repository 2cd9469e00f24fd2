//! Geometry quality assessment for colorless point clouds.
//!
//! The crate covers the whole pipeline: synthesizing graded geometric
//! distortions of reference clouds, classical full-reference metrics
//! (point-to-point, point-to-plane, plane-to-plane) and a pseudo-MOS derived
//! from them, and a no-reference patch model trained with the listMLE
//! list-wise ranking loss, plus NDCG and correlation statistics to evaluate it.
//!
//! Learning and statistics code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below name the common instantiations.

pub mod cloud;
pub mod distort;
pub mod error;
pub mod eval;
pub mod harness;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod patch;
pub mod rng;
pub mod scalar;
pub mod shapes;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use cloud::{Point3, PointCloud};
pub use error::{GqaError, Result};
pub use rng::Seed;
pub use scalar::Scalar;

pub type GqaNet32 = nn::GqaNet<f32>;
pub type GqaNet64 = nn::GqaNet<f64>;
pub type Checkpoint32 = nn::Checkpoint<f32>;
pub type Checkpoint64 = nn::Checkpoint<f64>;
pub type Adam32 = train::Adam<f32>;
pub type Adam64 = train::Adam<f64>;
