//! Neighbor queries and metrics against independent brute-force
//! references on randomized instances; equality is exact.

mod common;

use common::{random_points, rng};
use posediff_core::eval::{frame_errors, mean_joint_error, success_rate, MetricsReport};
use posediff_core::geometry::{farthest_point_sample, knn};
use posediff_core::{Point3, Pose};
use rand::Rng;

const INSTANCES: usize = 200;

fn d2(a: Point3, b: Point3) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    x * x + y * y + z * z
}

/// Random cloud, sometimes snapped to a coarse grid so exact distance ties
/// and duplicate points occur.
fn cloud<R: Rng>(r: &mut R) -> Vec<Point3> {
    let n = r.random_range(1..120);
    let mut pts = random_points(n, 1.0, r);
    if r.random_bool(0.4) {
        for p in &mut pts {
            for c in p.iter_mut() {
                *c = (*c * 3.0).round() / 3.0;
            }
        }
    }
    pts
}

/// Sort every index by (distance, index) and keep the first k.
fn knn_reference(q: Point3, pts: &[Point3], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (d2(*p, q), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|x| x.1).collect()
}

/// Recompute every candidate's distance to the chosen set from scratch.
fn fps_reference(pts: &[Point3], m: usize, seed: usize) -> Vec<usize> {
    let mut chosen = vec![seed];
    while chosen.len() < m {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..pts.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&c| d2(pts[i], pts[c])).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

#[test]
fn knn_matches_brute_force() {
    let mut r = rng(1);
    for _ in 0..INSTANCES {
        let pts = cloud(&mut r);
        let q = random_points(1, 1.2, &mut r)[0];
        let k = r.random_range(0..=pts.len());
        let got: Vec<usize> = knn(q, &pts, k).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(got, knn_reference(q, &pts, k));
        for n in knn(q, &pts, k).unwrap() {
            assert_eq!(n.dist2, d2(pts[n.index], q));
        }
    }
}

#[test]
fn fps_matches_brute_force() {
    let mut r = rng(2);
    for _ in 0..INSTANCES {
        let pts = cloud(&mut r);
        let m = r.random_range(1..=pts.len());
        let seed = r.random_range(0..pts.len());
        assert_eq!(farthest_point_sample(&pts, m, seed).unwrap(), fps_reference(&pts, m, seed));
    }
}

fn poses<R: Rng>(frames: usize, joints: usize, r: &mut R) -> Vec<Pose> {
    (0..frames)
        .map(|_| Pose::new(random_points(joints, 80.0, r)).unwrap())
        .collect()
}

#[test]
fn metrics_match_brute_force() {
    let mut r = rng(3);
    for _ in 0..INSTANCES {
        let frames = r.random_range(1..30);
        let joints = r.random_range(1..22);
        let pred = poses(frames, joints, &mut r);
        let truth = poses(frames, joints, &mut r);

        let mut per_frame = Vec::new();
        for f in 0..frames {
            let mut s = 0.0;
            for j in 0..joints {
                s += d2(pred[f].joint(j), truth[f].joint(j)).sqrt();
            }
            per_frame.push(s / joints as f64);
        }
        let mean = per_frame.iter().sum::<f64>() / frames as f64;
        assert_eq!(mean_joint_error(&pred, &truth).unwrap(), mean);
        assert_eq!(frame_errors(&pred, &truth).unwrap(), per_frame);

        for _ in 0..5 {
            let theta = if r.random_bool(0.3) {
                per_frame[r.random_range(0..frames)]
            } else {
                r.random_range(0.0..150.0)
            };
            let count = per_frame.iter().filter(|e| **e <= theta).count();
            assert_eq!(success_rate(&per_frame, theta), count as f64 / frames as f64);
        }

        let report = MetricsReport::from_predictions(&pred, &truth, &[0.0, 50.0, 100.0, 200.0]).unwrap();
        assert_eq!(report.mean_error_mm, mean);
    }
}

#[test]
fn metric_examples() {
    let truth = vec![Pose::new(vec![[0.0, 0.0, 0.0]]).unwrap()];
    let pred = vec![Pose::new(vec![[3.0, 4.0, 0.0]]).unwrap()];
    assert_eq!(mean_joint_error(&pred, &truth).unwrap(), 5.0);
    let r = MetricsReport::from_predictions(&truth, &truth, &[0.0, 10.0]).unwrap();
    assert_eq!(r.mean_error_mm, 0.0);
    assert!(r.success.iter().all(|(_, s)| *s == 1.0));
    assert!(mean_joint_error(&[], &[]).is_err());
}

#[test]
fn success_curve_is_monotone_and_saturates() {
    let mut r = rng(4);
    for _ in 0..50 {
        let pred = poses(20, 5, &mut r);
        let truth = poses(20, 5, &mut r);
        let errors = frame_errors(&pred, &truth).unwrap();
        let max = errors.iter().cloned().fold(0.0, f64::max);
        let thresholds: Vec<f64> = (0..=40).map(|i| i as f64 * 5.0).chain([max]).collect();
        let report = MetricsReport::from_predictions(&pred, &truth, &thresholds).unwrap();
        for w in report.success.windows(2) {
            assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        assert!(report.success.iter().all(|(_, s)| (0.0..=1.0).contains(s)));
        assert_eq!(success_rate(&errors, max), 1.0);
    }
}

#[test]
fn metrics_scale_with_normalization() {
    use posediff_core::geometry::NormalizationTransform;
    let mut r = rng(5);
    for _ in 0..50 {
        let t = NormalizationTransform {
            centroid: random_points(1, 300.0, &mut r)[0],
            scale: r.random_range(50.0..150.0),
        };
        let pred_n = poses(10, 21, &mut r);
        let truth_n = poses(10, 21, &mut r);
        let to_mm = |ps: &[Pose]| ps.iter().map(|p| p.map(|q| t.invert(q))).collect::<Vec<_>>();
        let mm = mean_joint_error(&to_mm(&pred_n), &to_mm(&truth_n)).unwrap();
        let norm = mean_joint_error(&pred_n, &truth_n).unwrap();
        assert!((mm - norm * t.scale).abs() <= 1e-9 * mm, "{mm} vs {}", norm * t.scale);
    }
}
