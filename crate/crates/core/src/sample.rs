//! One observed frame with its ground truth, ready for the model.

use rand::Rng;

use crate::geometry::{
    backproject, normalize, random_subsample, DepthFrame, GeometryError, Point3, PointCloud,
};
use crate::pose::Pose;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub id: usize,
    pub depth: DepthFrame,
    /// Every valid pixel back-projected into camera space (mm).
    pub raw_points: Vec<Point3>,
    /// `n_points` points drawn from `raw_points`, normalized.
    pub cloud: PointCloud,
    /// Ground truth in camera space (mm).
    pub joints_mm: Pose,
    /// Ground truth in the cloud's normalized frame.
    pub joints_norm: Pose,
}

impl FrameSample {
    pub fn new<R: Rng + ?Sized>(
        id: usize,
        depth: DepthFrame,
        joints_mm: Pose,
        n_points: usize,
        rng: &mut R,
    ) -> Result<Self, GeometryError> {
        let raw_points = backproject(&depth)?;
        let sampled = random_subsample(&raw_points, n_points, rng)?;
        Self::from_parts(id, depth, raw_points, &sampled, joints_mm)
    }

    pub(crate) fn from_parts(
        id: usize,
        depth: DepthFrame,
        raw_points: Vec<Point3>,
        sampled: &[Point3],
        joints_mm: Pose,
    ) -> Result<Self, GeometryError> {
        let cloud = normalize(sampled)?;
        let joints_norm = joints_mm.map(|p| cloud.transform.apply(p));
        Ok(Self {
            id,
            depth,
            raw_points,
            cloud,
            joints_mm,
            joints_norm,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joints_mm.len()
    }

    /// Same frame with a fresh random draw of `n_points` cloud points.
    pub fn resampled<R: Rng + ?Sized>(&self, n_points: usize, rng: &mut R) -> Result<Self, GeometryError> {
        let sampled = random_subsample(&self.raw_points, n_points, rng)?;
        Self::from_parts(
            self.id,
            self.depth.clone(),
            self.raw_points.clone(),
            &sampled,
            self.joints_mm.clone(),
        )
    }
}
