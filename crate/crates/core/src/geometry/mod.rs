//! Camera model, point-cloud normalization, neighbor queries and augmentation.

mod augment;
mod camera;
mod cloud;
mod neighbors;

pub use augment::{augment, AugmentationParams};
pub use camera::{backproject, downsample_half, splat, CameraIntrinsics, DepthFrame};
pub use cloud::{normalize, random_subsample, NormalizationTransform, PointCloud};
pub use neighbors::{dedup_indices, farthest_point_sample, knn, Neighbor};

use thiserror::Error;

pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),
    #[error("depth frame: {0}")]
    Frame(String),
    #[error("depth frame has no valid pixels")]
    EmptyFrame,
    #[error("point set is empty")]
    EmptyCloud,
    #[error("all points coincide; cannot normalize")]
    DegenerateCloud,
    #[error("requested {requested} points from a set of {available}")]
    TooFew { requested: usize, available: usize },
    #[error("augmentation parameter out of range: {0}")]
    Augmentation(String),
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    let s = points.iter().fold([0.0; 3], |acc, p| add(acc, *p));
    scale(s, 1.0 / n)
}

/// Minimum distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, add(a, scale(ab, t))))
}
