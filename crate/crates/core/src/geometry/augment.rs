use rand::Rng;

use super::{add, splat, sub, GeometryError, Point3};
use crate::sample::FrameSample;

pub const ROTATION_RANGE_DEG: (f64, f64) = (-180.0, 180.0);
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
pub const TRANSLATION_RANGE_MM: (f64, f64) = (-20.0, 20.0);

/// In-plane rotation about the view axis through the cloud centroid, uniform
/// scaling about the same centre, then a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    pub rotation_deg: f64,
    pub scale: f64,
    pub translation_mm: Point3,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: 1.0,
            translation_mm: [0.0; 3],
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            rotation_deg: rng.random_range(ROTATION_RANGE_DEG.0..=ROTATION_RANGE_DEG.1),
            scale: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
            translation_mm: [
                rng.random_range(TRANSLATION_RANGE_MM.0..=TRANSLATION_RANGE_MM.1),
                rng.random_range(TRANSLATION_RANGE_MM.0..=TRANSLATION_RANGE_MM.1),
                rng.random_range(TRANSLATION_RANGE_MM.0..=TRANSLATION_RANGE_MM.1),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.rotation_deg, ROTATION_RANGE_DEG) {
            return Err(GeometryError::Augmentation(format!(
                "rotation {} deg",
                self.rotation_deg
            )));
        }
        if !within(self.scale, SCALE_RANGE) {
            return Err(GeometryError::Augmentation(format!("scale {}", self.scale)));
        }
        if let Some(t) = self
            .translation_mm
            .iter()
            .find(|t| !within(**t, TRANSLATION_RANGE_MM))
        {
            return Err(GeometryError::Augmentation(format!("translation {t} mm")));
        }
        Ok(())
    }

    /// The transform as a closure over camera-space points.
    pub fn transform(&self, center: Point3) -> impl Fn(Point3) -> Point3 {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.scale;
        let t = self.translation_mm;
        move |p| {
            let d = sub(p, center);
            let r = [
                k * (c * d[0] - s * d[1]),
                k * (s * d[0] + c * d[1]),
                k * d[2],
            ];
            add(add(r, center), t)
        }
    }
}

/// Apply one rigid-plus-scale transform to every geometric quantity of a
/// frame: raw points, sampled cloud, ground-truth joints. The depth image is
/// re-rendered from the transformed raw points.
pub fn augment(sample: &FrameSample, params: &AugmentationParams) -> Result<FrameSample, GeometryError> {
    params.validate()?;
    let f = params.transform(sample.cloud.transform.centroid);
    let raw: Vec<Point3> = sample.raw_points.iter().map(|&p| f(p)).collect();
    let sampled: Vec<Point3> = sample.cloud.denormalize().into_iter().map(&f).collect();
    let joints = sample.joints_mm.map(&f);
    let depth = splat(
        &raw,
        sample.depth.intrinsics,
        sample.depth.width,
        sample.depth.height,
    );
    FrameSample::from_parts(sample.id, depth, raw, &sampled, joints)
}
