use crate::geometry::{dot, norm, scale, sub, CameraIntrinsics, DepthFrame, GeometryError, Point3};

/// Segment `a`–`b` swept by a sphere of `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Point3,
    pub b: Point3,
    pub radius: f64,
}

/// Nearest positive ray parameter where the ray `origin + t · dir` (unit
/// `dir`) enters the capsule.
pub fn ray_capsule(origin: Point3, dir: Point3, cap: &Capsule) -> Option<f64> {
    let ba = sub(cap.b, cap.a);
    let oa = sub(origin, cap.a);
    let baba = dot(ba, ba);
    let bard = dot(ba, dir);
    let baoa = dot(ba, oa);
    let rdoa = dot(dir, oa);
    let oaoa = dot(oa, oa);
    let r2 = cap.radius * cap.radius;
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r2 * baba;
    let h = b * b - a * c;
    if a > 1e-12 && h >= 0.0 {
        let t = (-b - h.sqrt()) / a;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return (t > 0.0).then_some(t);
        }
    }
    // Spherical caps: the cylinder body was missed (or the ray runs along
    // the axis), so test both end spheres and keep the nearer hit.
    let sphere = |center: Point3| {
        let oc = sub(origin, center);
        let b = dot(dir, oc);
        let c = dot(oc, oc) - r2;
        let h = b * b - c;
        (h >= 0.0).then(|| -b - h.sqrt()).filter(|t| *t > 0.0)
    };
    match (sphere(cap.a), sphere(cap.b)) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

/// Conservative pixel bounding box of a capsule, or `None` if it reaches
/// behind the camera plane.
fn pixel_bounds(cap: &Capsule, k: &CameraIntrinsics, w: usize, h: usize) -> Option<(usize, usize, usize, usize)> {
    let r = cap.radius;
    let mut u = (f64::INFINITY, f64::NEG_INFINITY);
    let mut v = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &[cap.a[0].min(cap.b[0]) - r, cap.a[0].max(cap.b[0]) + r] {
        for &y in &[cap.a[1].min(cap.b[1]) - r, cap.a[1].max(cap.b[1]) + r] {
            for &z in &[cap.a[2].min(cap.b[2]) - r, cap.a[2].max(cap.b[2]) + r] {
                let (pu, pv) = k.project([x, y, z])?;
                u = (u.0.min(pu), u.1.max(pu));
                v = (v.0.min(pv), v.1.max(pv));
            }
        }
    }
    let clamp = |lo: f64, hi: f64, n: usize| {
        let lo = lo.floor().max(0.0);
        let hi = hi.ceil().min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let (u0, u1) = clamp(u.0, u.1, w)?;
    let (v0, v1) = clamp(v.0, v.1, h)?;
    Some((u0, u1, v0, v1))
}

/// Z-buffer rasterization: each pixel ray keeps the nearest capsule surface.
/// Depth is the camera-space `z` of the hit.
pub fn render_depth(
    capsules: &[Capsule],
    intrinsics: CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<DepthFrame, GeometryError> {
    let mut frame = DepthFrame::empty(width, height, intrinsics);
    for cap in capsules {
        let Some((u0, u1, v0, v1)) = pixel_bounds(cap, &intrinsics, width, height)
            .or_else(|| (cap.a[2].min(cap.b[2]) - cap.radius <= 0.0).then_some((0, width - 1, 0, height - 1)))
        else {
            continue;
        };
        for v in v0..=v1 {
            for u in u0..=u1 {
                let ray = [
                    (u as f64 - intrinsics.cx) / intrinsics.fx,
                    (v as f64 - intrinsics.cy) / intrinsics.fy,
                    1.0,
                ];
                let dir = scale(ray, 1.0 / norm(ray));
                if let Some(t) = ray_capsule([0.0; 3], dir, cap) {
                    let z = t * dir[2];
                    let slot = &mut frame.depth[v * width + u];
                    if *slot == 0.0 || z < *slot {
                        *slot = z;
                    }
                }
            }
        }
    }
    if frame.valid_count() == 0 {
        return Err(GeometryError::EmptyFrame);
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{backproject, point_segment_distance};

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(240.0, 240.0, 64.0, 64.0).unwrap()
    }

    #[test]
    fn vertical_capsule_on_axis() {
        let cap = Capsule {
            a: [0.0, -40.0, 500.0],
            b: [0.0, 40.0, 500.0],
            radius: 10.0,
        };
        let f = render_depth(&[cap], camera(), 128, 128).unwrap();
        let center = f.at(64, 64);
        assert!((center - 490.0).abs() < 1e-9);
        let min = f.depth.iter().filter(|d| **d > 0.0).fold(f64::INFINITY, |a, b| a.min(*b));
        // The body's front line is equally near along its length.
        assert!(min >= center - 1e-9);
    }

    #[test]
    fn nearer_capsule_wins() {
        let near = Capsule { a: [-30.0, 0.0, 400.0], b: [30.0, 0.0, 400.0], radius: 10.0 };
        let far = Capsule { a: [0.0, -30.0, 500.0], b: [0.0, 30.0, 500.0], radius: 10.0 };
        for order in [[near, far], [far, near]] {
            let f = render_depth(&order, camera(), 128, 128).unwrap();
            assert!((f.at(64, 64) - 390.0).abs() < 1e-9);
        }
    }

    #[test]
    fn surface_points_lie_on_capsules() {
        let caps = [
            Capsule { a: [-20.0, 10.0, 450.0], b: [25.0, -30.0, 480.0], radius: 9.0 },
            Capsule { a: [10.0, 30.0, 470.0], b: [-5.0, -10.0, 430.0], radius: 6.0 },
        ];
        let f = render_depth(&caps, camera(), 128, 128).unwrap();
        for p in backproject(&f).unwrap() {
            let d = caps
                .iter()
                .map(|c| point_segment_distance(p, c.a, c.b) - c.radius)
                .fold(f64::INFINITY, f64::min);
            assert!(d.abs() < 1e-6, "{d}");
        }
    }

    #[test]
    fn out_of_view_is_empty() {
        let cap = Capsule { a: [5000.0, 0.0, 400.0], b: [5100.0, 0.0, 400.0], radius: 10.0 };
        assert_eq!(render_depth(&[cap], camera(), 128, 128), Err(GeometryError::EmptyFrame));
    }

    #[test]
    fn ray_along_axis_hits_cap() {
        let cap = Capsule { a: [0.0, 0.0, 100.0], b: [0.0, 0.0, 200.0], radius: 5.0 };
        assert!((ray_capsule([0.0; 3], [0.0, 0.0, 1.0], &cap).unwrap() - 95.0).abs() < 1e-12);
    }
}
