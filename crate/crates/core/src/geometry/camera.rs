use super::{GeometryError, Point3};

/// Pinhole intrinsics in pixels. Pixel `(u, v)` with integer coordinates maps
/// to the ray through `((u - cx) / fx, (v - cy) / fy, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::Intrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::Intrinsics("non-finite principal point".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Point3 {
        [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth]
    }

    /// Continuous pixel coordinates of a point in front of the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64)> {
        (p[2] > 0.0).then(|| (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy))
    }

    /// Virtual camera whose `size`×`size` image covers a `cube_mm` wide
    /// window centred on the projection of `center`.
    pub fn crop(center: Point3, cube_mm: f64, size: usize) -> Result<Self, GeometryError> {
        if !(center[2] > 0.0) || !(cube_mm > 0.0) || size == 0 {
            return Err(GeometryError::Intrinsics(format!(
                "crop around {center:?} with cube {cube_mm} mm and size {size}"
            )));
        }
        let f = size as f64 * center[2] / cube_mm;
        let half = (size as f64 - 1.0) / 2.0;
        Self::new(
            f,
            f,
            half - f * center[0] / center[2],
            half - f * center[1] / center[2],
        )
    }
}

/// Depth image in millimetres, row-major; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub intrinsics: CameraIntrinsics,
}

impl DepthFrame {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        if depth.len() != width * height {
            return Err(GeometryError::Frame(format!(
                "{} values for a {width}x{height} frame",
                depth.len()
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(GeometryError::Frame(format!("invalid depth value {bad}")));
        }
        Ok(Self {
            width,
            height,
            depth,
            intrinsics,
        })
    }

    pub fn empty(width: usize, height: usize, intrinsics: CameraIntrinsics) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            intrinsics,
        }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }
}

/// One camera-space point (mm) per valid pixel, in row-major pixel order.
pub fn backproject(frame: &DepthFrame) -> Result<Vec<Point3>, GeometryError> {
    let mut out = Vec::with_capacity(frame.valid_count());
    for v in 0..frame.height {
        for u in 0..frame.width {
            let d = frame.at(u, v);
            if d > 0.0 {
                out.push(frame.intrinsics.backproject(u as f64, v as f64, d));
            }
        }
    }
    if out.is_empty() {
        return Err(GeometryError::EmptyFrame);
    }
    Ok(out)
}

/// Z-buffer splat of points into a `width`×`height` frame: each point lands
/// on its nearest pixel and the closest depth wins.
pub fn splat(points: &[Point3], intrinsics: CameraIntrinsics, width: usize, height: usize) -> DepthFrame {
    let mut frame = DepthFrame::empty(width, height, intrinsics);
    for &p in points {
        let Some((u, v)) = intrinsics.project(p) else { continue };
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
            continue;
        }
        let slot = &mut frame.depth[v as usize * width + u as usize];
        if *slot == 0.0 || p[2] < *slot {
            *slot = p[2];
        }
    }
    frame
}

/// Half-resolution frame: each output pixel averages the valid depths of its
/// 2×2 block (0 when none are valid). Intrinsics follow the block centres.
pub fn downsample_half(frame: &DepthFrame) -> DepthFrame {
    let (w, h) = (frame.width / 2, frame.height / 2);
    let k = frame.intrinsics;
    let intrinsics = CameraIntrinsics {
        fx: k.fx / 2.0,
        fy: k.fy / 2.0,
        cx: (k.cx - 0.5) / 2.0,
        cy: (k.cy - 0.5) / 2.0,
    };
    let mut out = DepthFrame::empty(w, h, intrinsics);
    for v in 0..h {
        for u in 0..w {
            let mut sum = 0.0;
            let mut n = 0;
            for dv in 0..2 {
                for du in 0..2 {
                    let d = frame.at(2 * u + du, 2 * v + dv);
                    if d > 0.0 {
                        sum += d;
                        n += 1;
                    }
                }
            }
            if n > 0 {
                out.depth[v * w + u] = sum / n as f64;
            }
        }
    }
    out
}
