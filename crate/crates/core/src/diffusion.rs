//! Variance schedules, forward noising, the DDIM noiser and hypothesis
//! aggregation.
//!
//! Timesteps are 1-based: `t ∈ 1..=T`, with `ᾱ_0 = 1` so that a step to
//! `t_prev = 0` is noise-free.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::pose::Pose;

pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;
pub const COSINE_OFFSET: f64 = 0.008;
pub const COSINE_MAX_BETA: f64 = 0.999;
/// Tolerance below zero before `1 - ᾱ_prev - σ²` is treated as a domain error.
pub const DDIM_CLAMP: f64 = -1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("a schedule needs at least 2 timesteps, got {0}")]
    TooFewSteps(usize),
    #[error("timestep {t} outside 1..={total}")]
    Timestep { t: usize, total: usize },
    #[error("cannot step from t={t} to t_prev={t_prev}")]
    StepOrder { t: usize, t_prev: usize },
    #[error("requested {requested} timesteps from a schedule of {total}")]
    Subsample { requested: usize, total: usize },
    #[error("hypothesis set is empty")]
    NoHypotheses,
    #[error("hypotheses disagree: {0}")]
    Inconsistent(String),
    #[error("1 - ᾱ_prev - σ² = {0} is negative")]
    Domain(f64),
    #[error("unknown schedule kind `{0}` (expected linear or cosine)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = DiffusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(DiffusionError::UnknownKind(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    /// Index 0 is a placeholder (`β_0 = 0`, `ᾱ_0 = 1`).
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(kind: ScheduleKind, total: usize) -> Result<Self, DiffusionError> {
        if total < 2 {
            return Err(DiffusionError::TooFewSteps(total));
        }
        let mut betas = vec![0.0; total + 1];
        match kind {
            ScheduleKind::Linear => {
                let span = LINEAR_BETA_END - LINEAR_BETA_START;
                for (t, beta) in betas.iter_mut().enumerate().skip(1) {
                    *beta = LINEAR_BETA_START + span * (t - 1) as f64 / (total - 1) as f64;
                }
            }
            ScheduleKind::Cosine => {
                let f = |t: usize| {
                    let x = (t as f64 / total as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                    (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
                };
                for (t, beta) in betas.iter_mut().enumerate().skip(1) {
                    *beta = (1.0 - f(t) / f(t - 1)).min(COSINE_MAX_BETA);
                }
            }
        }
        let mut alpha_bars = vec![1.0; total + 1];
        for t in 1..=total {
            alpha_bars[t] = alpha_bars[t - 1] * (1.0 - betas[t]);
        }
        Ok(Self {
            kind,
            betas,
            alpha_bars,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// `T`.
    pub fn total_steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.total_steps() {
            return Err(DiffusionError::Timestep {
                t,
                total: self.total_steps(),
            });
        }
        Ok(())
    }

    /// DDIM stochasticity for a jump from `t` to `t_prev`:
    /// `σ = √((1 - ᾱ_prev)(1 - ᾱ_t / ᾱ_prev) / (1 - ᾱ_t))`.
    pub fn sigma(&self, t: usize, t_prev: usize) -> f64 {
        sigma_from(self.alpha_bar(t), self.alpha_bar(t_prev))
    }

    /// `t,beta,alpha_bar,sigma` rows for `t = 1..=T`; σ is for the step `t → t-1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha_bar,sigma\n");
        for t in 1..=self.total_steps() {
            out.push_str(&format!(
                "{t},{:e},{:e},{:e}\n",
                self.beta(t),
                self.alpha_bar(t),
                self.sigma(t, t - 1)
            ));
        }
        out
    }
}

pub fn sigma_from(alpha_bar_t: f64, alpha_bar_prev: f64) -> f64 {
    ((1.0 - alpha_bar_prev) * (1.0 - alpha_bar_t / alpha_bar_prev) / (1.0 - alpha_bar_t))
        .max(0.0)
        .sqrt()
}

/// `√ᾱ_t · J⁰ + √(1 - ᾱ_t) · ε`.
pub fn forward_noise(
    clean: &Pose,
    t: usize,
    noise: &Pose,
    schedule: &DiffusionSchedule,
) -> Result<Pose, DiffusionError> {
    schedule.check(t)?;
    if noise.len() != clean.len() {
        return Err(DiffusionError::Inconsistent(format!(
            "{} noise rows for {} joints",
            noise.len(),
            clean.len()
        )));
    }
    let a = schedule.alpha_bar(t);
    let (signal, spread) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(Pose::new(
        clean
            .joints()
            .iter()
            .zip(noise.joints())
            .map(|(c, e)| {
                [
                    signal * c[0] + e[0] * spread,
                    signal * c[1] + e[1] * spread,
                    signal * c[2] + e[2] * spread,
                ]
            })
            .collect(),
    )
    .expect("finite combination of finite poses"))
}

/// Unit Gaussian pose.
pub fn gaussian_pose<R: Rng + ?Sized>(joints: usize, rng: &mut R) -> Pose {
    Pose::new(
        (0..joints)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect(),
    )
    .expect("gaussian draws are finite")
}

/// Noise implied by a clean estimate: `ε_t = (J_t - √ᾱ_t · J̃⁰) / √(1 - ᾱ_t)`.
pub fn predicted_noise(noisy: &Pose, clean_estimate: &Pose, alpha_bar_t: f64) -> Pose {
    let signal = alpha_bar_t.sqrt();
    let spread = (1.0 - alpha_bar_t).sqrt();
    Pose::new(
        noisy
            .joints()
            .iter()
            .zip(clean_estimate.joints())
            .map(|(x, c)| {
                [
                    (x[0] - signal * c[0]) / spread,
                    (x[1] - signal * c[1]) / spread,
                    (x[2] - signal * c[2]) / spread,
                ]
            })
            .collect(),
    )
    .expect("finite for ᾱ_t < 1")
}

/// `H` poses at one shared timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    poses: Vec<Pose>,
    t: usize,
}

impl HypothesisSet {
    pub fn new(poses: Vec<Pose>, t: usize) -> Result<Self, DiffusionError> {
        let first = poses.first().ok_or(DiffusionError::NoHypotheses)?;
        if let Some(bad) = poses.iter().find(|p| p.len() != first.len()) {
            return Err(DiffusionError::Inconsistent(format!(
                "{} vs {} joints",
                first.len(),
                bad.len()
            )));
        }
        Ok(Self { poses, t })
    }

    /// `H` unit-Gaussian poses at timestep `t`.
    pub fn gaussian<R: Rng + ?Sized>(hypotheses: usize, joints: usize, t: usize, rng: &mut R) -> Result<Self, DiffusionError> {
        Self::new((0..hypotheses).map(|_| gaussian_pose(joints, rng)).collect(), t)
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn timestep(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.poses[0].len()
    }
}

/// One DDIM noiser step `t → t_prev` with a fresh unit-Gaussian `ε` per
/// hypothesis and coordinate.
pub fn ddim_step<R: Rng + ?Sized>(
    noisy: &HypothesisSet,
    clean_estimate: &HypothesisSet,
    t_prev: usize,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<HypothesisSet, DiffusionError> {
    let noise: Vec<Pose> = (0..noisy.len())
        .map(|_| gaussian_pose(noisy.joint_count(), rng))
        .collect();
    ddim_step_with_noise(noisy, clean_estimate, t_prev, schedule, &noise)
}

/// [`ddim_step`] with caller-supplied `ε`.
pub fn ddim_step_with_noise(
    noisy: &HypothesisSet,
    clean_estimate: &HypothesisSet,
    t_prev: usize,
    schedule: &DiffusionSchedule,
    noise: &[Pose],
) -> Result<HypothesisSet, DiffusionError> {
    let t = noisy.t;
    schedule.check(t)?;
    if t_prev >= t {
        return Err(DiffusionError::StepOrder { t, t_prev });
    }
    if clean_estimate.len() != noisy.len() || noise.len() != noisy.len() {
        return Err(DiffusionError::Inconsistent(format!(
            "{} noisy, {} estimates, {} noise draws",
            noisy.len(),
            clean_estimate.len(),
            noise.len()
        )));
    }
    let a_t = schedule.alpha_bar(t);
    let a_prev = schedule.alpha_bar(t_prev);
    let sigma = sigma_from(a_t, a_prev);
    let mut direction = 1.0 - a_prev - sigma * sigma;
    if direction < 0.0 {
        if direction < DDIM_CLAMP {
            return Err(DiffusionError::Domain(direction));
        }
        direction = 0.0;
    }
    let (signal, dir) = (a_prev.sqrt(), direction.sqrt());

    let mut poses = Vec::with_capacity(noisy.len());
    for ((x, c), e) in noisy.poses.iter().zip(&clean_estimate.poses).zip(noise) {
        let eps_t = predicted_noise(x, c, a_t);
        let joints = c
            .joints()
            .iter()
            .zip(eps_t.joints())
            .zip(e.joints())
            .map(|((c, et), e)| {
                let mut out = [0.0; 3];
                for k in 0..3 {
                    out[k] = signal * c[k] + dir * et[k] + sigma * e[k];
                }
                out
            })
            .collect();
        poses.push(Pose::new(joints).map_err(|e| DiffusionError::Inconsistent(e.to_string()))?);
    }
    HypothesisSet::new(poses, t_prev)
}

/// `T'` evenly spaced timesteps from `T` down to 1.
pub fn subsample_timesteps(total: usize, count: usize) -> Result<Vec<usize>, DiffusionError> {
    if count == 0 || count > total {
        return Err(DiffusionError::Subsample {
            requested: count,
            total,
        });
    }
    if count == 1 {
        return Ok(vec![total]);
    }
    let stride = (total - 1) as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| (total as f64 - i as f64 * stride).round() as usize)
        .collect())
}

/// Per-joint arithmetic mean over hypotheses.
pub fn aggregate_hypotheses(set: &HypothesisSet) -> Result<Pose, DiffusionError> {
    if set.is_empty() {
        return Err(DiffusionError::NoHypotheses);
    }
    let h = set.len() as f64;
    let mut acc = vec![[0.0; 3]; set.joint_count()];
    for pose in &set.poses {
        for (a, p) in acc.iter_mut().zip(pose.joints()) {
            for k in 0..3 {
                a[k] += p[k];
            }
        }
    }
    Ok(Pose::new(acc.into_iter().map(|a| [a[0] / h, a[1] / h, a[2] / h]).collect())
        .expect("mean of finite poses"))
}

/// Full reverse process over `steps` (descending). The denoiser maps a noisy
/// set at its timestep to clean estimates; the noiser produces the input of the
/// next step. The clean estimates of the last step are averaged and returned.
/// `observe` sees every noisy set fed to the denoiser.
pub fn reverse_process<R, D, O>(
    initial: HypothesisSet,
    steps: &[usize],
    schedule: &DiffusionSchedule,
    rng: &mut R,
    mut denoise: D,
    mut observe: O,
) -> Result<Pose, crate::Error>
where
    R: Rng + ?Sized,
    D: FnMut(&HypothesisSet) -> Result<HypothesisSet, crate::Error>,
    O: FnMut(&HypothesisSet),
{
    let first = *steps.first().ok_or(DiffusionError::Subsample {
        requested: 0,
        total: schedule.total_steps(),
    })?;
    if initial.timestep() != first {
        return Err(DiffusionError::StepOrder {
            t: initial.timestep(),
            t_prev: first,
        }
        .into());
    }
    let mut current = initial;
    for (i, &t) in steps.iter().enumerate() {
        debug_assert_eq!(current.timestep(), t);
        observe(&current);
        let estimate = denoise(&current)?;
        match steps.get(i + 1) {
            Some(&t_prev) => current = ddim_step(&current, &estimate, t_prev, schedule, rng)?,
            None => return Ok(aggregate_hypotheses(&estimate)?),
        }
    }
    unreachable!("steps is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose(rows: &[[f64; 3]]) -> Pose {
        Pose::new(rows.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_endpoints() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            let s = DiffusionSchedule::new(kind, 500).unwrap();
            assert!(s.alpha_bar(1) > 0.9, "{kind}");
            assert!(s.alpha_bar(500) < 0.05, "{kind}");
            for t in 1..=500 {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
    }

    #[test]
    fn rejects_short_schedules() {
        assert_eq!(
            DiffusionSchedule::new(ScheduleKind::Cosine, 1),
            Err(DiffusionError::TooFewSteps(1))
        );
    }

    #[test]
    fn sigma_formula() {
        assert!((sigma_from(0.25, 0.5) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn predicted_noise_formula() {
        let e = predicted_noise(&pose(&[[1.0, 0.0, 0.0]]), &pose(&[[0.0; 3]]), 0.25);
        assert!((e.joint(0)[0] - 1.154700538379).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_shrinks() {
        let s = DiffusionSchedule::new(ScheduleKind::Cosine, 100).unwrap();
        let j0 = pose(&[[1.0, -2.0, 0.5]]);
        let out = forward_noise(&j0, 40, &pose(&[[0.0; 3]]), &s).unwrap();
        let k = s.alpha_bar(40).sqrt();
        assert!(out.max_abs_diff(&j0.map(|p| [p[0] * k, p[1] * k, p[2] * k])) < 1e-15);
    }

    #[test]
    fn forward_noise_rejects_bad_timestep() {
        let s = DiffusionSchedule::new(ScheduleKind::Linear, 10).unwrap();
        let p = pose(&[[0.0; 3]]);
        assert!(forward_noise(&p, 0, &p, &s).is_err());
        assert!(forward_noise(&p, 11, &p, &s).is_err());
    }

    #[test]
    fn subsample_examples() {
        assert_eq!(subsample_timesteps(500, 1).unwrap(), vec![500]);
        assert_eq!(subsample_timesteps(5, 5).unwrap(), vec![5, 4, 3, 2, 1]);
        let ten = subsample_timesteps(500, 10).unwrap();
        assert_eq!(ten.len(), 10);
        assert_eq!(ten[0], 500);
        assert_eq!(ten[9], 1);
        assert!(ten.windows(2).all(|w| w[0] > w[1]));
        assert!(subsample_timesteps(10, 11).is_err());
    }

    #[test]
    fn aggregate_means() {
        let set = HypothesisSet::new(vec![pose(&[[0.0; 3]]), pose(&[[2.0; 3]])], 0).unwrap();
        assert_eq!(aggregate_hypotheses(&set).unwrap(), pose(&[[1.0; 3]]));
        let same = HypothesisSet::new(vec![pose(&[[0.3, 0.1, -4.0]]); 5], 0).unwrap();
        assert!(aggregate_hypotheses(&same).unwrap().max_abs_diff(&same.poses()[0]) < 1e-15);
        assert_eq!(HypothesisSet::new(vec![], 3), Err(DiffusionError::NoHypotheses));
    }

    #[test]
    fn deterministic_branch_with_zero_sigma() {
        // t_prev = 0 has ᾱ_prev = 1, so the step returns the clean estimate.
        let s = DiffusionSchedule::new(ScheduleKind::Cosine, 50).unwrap();
        let target = pose(&[[0.2, -0.4, 0.9], [1.0, 0.0, -1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = HypothesisSet::gaussian(3, 2, 7, &mut rng).unwrap();
        let est = HypothesisSet::new(vec![target.clone(); 3], 7).unwrap();
        let out = ddim_step(&noisy, &est, 0, &s, &mut rng).unwrap();
        for p in out.poses() {
            assert_eq!(p, &target);
        }
    }

    #[test]
    fn step_order_enforced() {
        let s = DiffusionSchedule::new(ScheduleKind::Cosine, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = HypothesisSet::gaussian(1, 2, 7, &mut rng).unwrap();
        assert!(ddim_step(&set, &set, 7, &s, &mut rng).is_err());
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let s = DiffusionSchedule::new(ScheduleKind::Cosine, 20).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("t,beta,alpha_bar,sigma\n1,"));
    }
}
