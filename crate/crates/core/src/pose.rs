//! Joint coordinate sets.

use thiserror::Error;

use crate::geometry::Point3;
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("a pose needs at least one joint")]
    Empty,
    #[error("joint {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("expected a [J, 3] tensor, got {0:?}")]
    Shape(Vec<usize>),
}

/// `J × 3` joint coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    joints: Vec<Point3>,
}

impl Pose {
    pub fn new(joints: Vec<Point3>) -> Result<Self, PoseError> {
        if joints.is_empty() {
            return Err(PoseError::Empty);
        }
        if let Some(j) = joints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(PoseError::NonFinite(j));
        }
        Ok(Self { joints })
    }

    pub fn zeros(joints: usize) -> Self {
        Self {
            joints: vec![[0.0; 3]; joints.max(1)],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, PoseError> {
        if t.rank() != 2 || t.shape()[1] != 3 {
            return Err(PoseError::Shape(t.shape().to_vec()));
        }
        Self::new(
            t.data()
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect(),
        )
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_rows(&self.joints)
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Point3] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> Point3 {
        self.joints[j]
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self {
            joints: self.joints.iter().map(|&p| f(p)).collect(),
        }
    }

    /// `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            joints: perm.iter().map(|&i| self.joints[i]).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        self.joints
            .iter()
            .zip(&other.joints)
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(0.0, f64::max)
    }
}
