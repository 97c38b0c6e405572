//! Statistical and arithmetic contracts of the forward and reverse
//! processes, and of the smooth-L1 loss.

mod common;

use common::rng;
use posediff_core::autograd::smooth_l1;
use posediff_core::diffusion::{
    forward_noise, gaussian_pose, predicted_noise, reverse_process, sigma_from, subsample_timesteps,
};
use posediff_core::{DiffusionSchedule, HypothesisSet, Pose, ScheduleKind};
use rand::Rng;

fn clean_pose() -> Pose {
    Pose::new(vec![[0.3, -0.7, 1.2], [-1.1, 0.4, 0.05], [0.8, 0.9, -0.6]]).unwrap()
}

/// Sample mean within 3 standard errors of `mean`, sample variance within
/// 3 standard errors of `var` (standard error of a Gaussian sample
/// variance: `var · √(2 / (n − 1))`).
fn assert_moments(samples: &[f64], mean: f64, var: f64, what: &str) {
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let se_var = var * (2.0 / (n - 1.0)).sqrt();
    assert!((m - mean).abs() <= 3.0 * se_mean, "{what}: mean {m} vs {mean} (se {se_mean})");
    assert!((v - var).abs() <= 3.0 * se_var, "{what}: variance {v} vs {var} (se {se_var})");
}

#[test]
fn forward_noise_marginals() {
    let schedule = DiffusionSchedule::new(ScheduleKind::Cosine, 100).unwrap();
    let clean = clean_pose();
    let mut r = rng(2024);
    for t in [1, 25, 50, 75, 100] {
        let draws: Vec<Pose> = (0..10_000)
            .map(|_| forward_noise(&clean, t, &gaussian_pose(3, &mut r), &schedule).unwrap())
            .collect();
        let a = schedule.alpha_bar(t);
        for j in 0..3 {
            for k in 0..3 {
                let xs: Vec<f64> = draws.iter().map(|p| p.joint(j)[k]).collect();
                assert_moments(&xs, a.sqrt() * clean.joint(j)[k], 1.0 - a, &format!("t={t} j={j} k={k}"));
            }
        }
    }
}

#[test]
fn oracle_reverse_chain() {
    let schedule = DiffusionSchedule::new(ScheduleKind::Cosine, 100).unwrap();
    let steps = subsample_timesteps(100, 100).unwrap();
    assert_eq!(steps, (1..=100).rev().collect::<Vec<_>>());
    let clean = clean_pose();
    let probes = [90usize, 50, 10, 2];
    let mut seen: Vec<Vec<Pose>> = vec![Vec::new(); probes.len()];
    let mut r = rng(77);
    for _ in 0..5_000 {
        let start = HypothesisSet::gaussian(1, 3, 100, &mut r).unwrap();
        let out = reverse_process(
            start,
            &steps,
            &schedule,
            &mut r,
            |set| Ok(HypothesisSet::new(vec![clean.clone(); set.len()], set.timestep())?),
            |set| {
                if let Some(i) = probes.iter().position(|&t| t == set.timestep()) {
                    seen[i].push(set.poses()[0].clone());
                }
            },
        )
        .unwrap();
        assert_eq!(out, clean, "the final step emits the clean estimate");
    }
    for (i, &t) in probes.iter().enumerate() {
        let a = schedule.alpha_bar(t);
        for j in 0..3 {
            for k in 0..3 {
                let xs: Vec<f64> = seen[i].iter().map(|p| p.joint(j)[k]).collect();
                assert_moments(&xs, a.sqrt() * clean.joint(j)[k], 1.0 - a, &format!("t={t} j={j} k={k}"));
            }
        }
    }
}

#[test]
fn sigma_arithmetic() {
    assert!((sigma_from(0.25, 0.5) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn noise_reconstruction_identity() {
    let mut r = rng(5);
    for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
        let schedule = DiffusionSchedule::new(kind, 500).unwrap();
        for _ in 0..200 {
            let t = r.random_range(1..=500);
            let clean = gaussian_pose(21, &mut r);
            let eps = gaussian_pose(21, &mut r);
            let noisy = forward_noise(&clean, t, &eps, &schedule).unwrap();
            let back = predicted_noise(&noisy, &clean, schedule.alpha_bar(t));
            assert!(back.max_abs_diff(&eps) < 1e-9, "t={t}: {}", back.max_abs_diff(&eps));
        }
    }
}

/// Direct transcription of the piecewise definition.
fn smooth_l1_reference(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.01 {
        0.5 * a * a / 0.01
    } else {
        a - 0.5 * 0.01
    }
}

#[test]
fn smooth_l1_contract() {
    let below = 0.01f64.next_down();
    assert!((smooth_l1(below) - 0.005).abs() < 1e-12);
    assert!((smooth_l1(0.01) - 0.005).abs() < 1e-12);
    assert!((smooth_l1(-below) - 0.005).abs() < 1e-12);
    assert_eq!(smooth_l1(0.0), 0.0);
    assert!((smooth_l1(0.1) - 0.095).abs() < 1e-15);
    assert!((smooth_l1(0.005) - 0.00125).abs() < 1e-15);
    let mut r = rng(9);
    for _ in 0..1_000 {
        let scale = [0.02, 0.2, 5.0][r.random_range(0..3)];
        let x = r.random_range(-scale..scale);
        assert!((smooth_l1(x) - smooth_l1_reference(x)).abs() < 1e-15, "x = {x}");
    }
}

#[test]
fn schedules_are_monotone() {
    for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
        let s = DiffusionSchedule::new(kind, 500).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=500 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1), "{kind} t={t}");
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
        }
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 501);
    }
}
