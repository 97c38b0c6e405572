use rand::Rng;

use super::{centroid, dist2, GeometryError, Point3};

/// `normalized = (raw - centroid) / scale`, both in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub centroid: Point3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn apply(&self, p: Point3) -> Point3 {
        let c = self.centroid;
        [
            (p[0] - c[0]) / self.scale,
            (p[1] - c[1]) / self.scale,
            (p[2] - c[2]) / self.scale,
        ]
    }

    pub fn invert(&self, q: Point3) -> Point3 {
        let c = self.centroid;
        [
            q[0] * self.scale + c[0],
            q[1] * self.scale + c[1],
            q[2] * self.scale + c[2],
        ]
    }
}

/// Points centred on their centroid and scaled into the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub transform: NormalizationTransform,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn denormalize(&self) -> Vec<Point3> {
        self.points.iter().map(|&q| self.transform.invert(q)).collect()
    }
}

pub fn normalize(points: &[Point3]) -> Result<PointCloud, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let c = centroid(points);
    let scale = points.iter().map(|&p| dist2(p, c)).fold(0.0, f64::max).sqrt();
    if !(scale > 0.0) {
        return Err(GeometryError::DegenerateCloud);
    }
    let transform = NormalizationTransform { centroid: c, scale };
    Ok(PointCloud {
        points: points.iter().map(|&p| transform.apply(p)).collect(),
        transform,
    })
}

/// `n` points drawn uniformly without replacement, or every point plus
/// uniform draws with replacement when fewer than `n` exist.
pub fn random_subsample<R: Rng + ?Sized>(
    points: &[Point3],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Point3>, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    if points.len() >= n {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        for i in 0..n {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        Ok(idx[..n].iter().map(|&i| points[i]).collect())
    } else {
        let mut out = points.to_vec();
        while out.len() < n {
            out.push(points[rng.random_range(0..points.len())]);
        }
        Ok(out)
    }
}
