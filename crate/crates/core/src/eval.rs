//! Held-out evaluation: full reverse diffusion per frame, metrics in
//! millimetres, sweeps over the sampler settings, component ablations and
//! the two reference baselines.

use std::fmt;
use std::str::FromStr;

use crate::config::{Components, Config};
use crate::error::{Error, Result};
use crate::geometry::{dist2, Point3};
use crate::model::{streams, Model, ModelInput};
use crate::pose::Pose;
use crate::rng;
use crate::sample::FrameSample;
use crate::train::{EpochReport, Trainer};

/// Thresholds (mm) of the default success-rate curve: 0, 5, …, 80.
pub fn default_thresholds() -> Vec<f64> {
    (0..=16).map(|i| i as f64 * 5.0).collect()
}

fn check_pairs(predictions: &[Pose], truth: &[Pose]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Precondition("no frames to score".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Precondition(format!(
            "{} predictions for {} ground-truth frames",
            predictions.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in predictions.iter().zip(truth).enumerate() {
        if p.len() != t.len() || p.is_empty() {
            return Err(Error::Precondition(format!(
                "frame {i}: {} predicted joints vs {} ground-truth joints",
                p.len(),
                t.len()
            )));
        }
    }
    Ok(())
}

/// Euclidean distance of every joint, frame-major.
fn joint_distances(predictions: &[Pose], truth: &[Pose]) -> Vec<Vec<f64>> {
    predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            p.joints()
                .iter()
                .zip(t.joints())
                .map(|(a, b)| dist2(*a, *b).sqrt())
                .collect()
        })
        .collect()
}

/// Mean joint distance of each frame.
pub fn frame_errors(predictions: &[Pose], truth: &[Pose]) -> Result<Vec<f64>> {
    check_pairs(predictions, truth)?;
    Ok(joint_distances(predictions, truth)
        .into_iter()
        .map(|d| d.iter().sum::<f64>() / d.len() as f64)
        .collect())
}

/// Average over frames of the per-frame mean joint distance.
pub fn mean_joint_error(predictions: &[Pose], truth: &[Pose]) -> Result<f64> {
    let e = frame_errors(predictions, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Fraction of frames whose mean joint error is at most `threshold`.
pub fn success_rate(frame_errors: &[f64], threshold: f64) -> f64 {
    if frame_errors.is_empty() {
        return 0.0;
    }
    frame_errors.iter().filter(|e| **e <= threshold).count() as f64 / frame_errors.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mean_error_mm: f64,
    /// Mean error of each joint over all frames.
    pub per_joint_mm: Vec<f64>,
    /// `(threshold mm, fraction of frames)`, thresholds ascending.
    pub success: Vec<(f64, f64)>,
    pub frames: usize,
}

impl MetricsReport {
    pub fn from_predictions(predictions: &[Pose], truth: &[Pose], thresholds: &[f64]) -> Result<Self> {
        check_pairs(predictions, truth)?;
        let mut thresholds = thresholds.to_vec();
        thresholds.sort_by(f64::total_cmp);
        let distances = joint_distances(predictions, truth);
        let frames = distances.len();
        let joints = distances[0].len();
        let per_frame: Vec<f64> = distances
            .iter()
            .map(|d| d.iter().sum::<f64>() / joints as f64)
            .collect();
        let per_joint = (0..joints)
            .map(|j| distances.iter().map(|d| d[j]).sum::<f64>() / frames as f64)
            .collect();
        Ok(Self {
            mean_error_mm: per_frame.iter().sum::<f64>() / frames as f64,
            per_joint_mm: per_joint,
            success: thresholds
                .iter()
                .map(|&t| (t, success_rate(&per_frame, t)))
                .collect(),
            frames,
        })
    }

    /// `metric,joint,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,joint,value\n");
        s.push_str(&format!("mean_error_mm,,{:.6}\n", self.mean_error_mm));
        for (j, e) in self.per_joint_mm.iter().enumerate() {
            s.push_str(&format!("joint_error_mm,{j},{e:.6}\n"));
        }
        for (t, r) in &self.success {
            s.push_str(&format!("success_rate@{t}mm,,{r:.6}\n"));
        }
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mean joint error {:.3} mm over {} frames", self.mean_error_mm, self.frames)?;
        for (t, r) in self.success.iter().filter(|(t, _)| [10.0, 20.0, 40.0].contains(t)) {
            write!(f, ", {:.1}% within {t} mm", r * 100.0)?;
        }
        Ok(())
    }
}

/// `frame,joint,x_mm,y_mm,z_mm` rows.
pub fn predictions_csv(predictions: &[Pose]) -> String {
    let mut s = String::from("frame,joint,x_mm,y_mm,z_mm\n");
    for (i, p) in predictions.iter().enumerate() {
        for (j, q) in p.joints().iter().enumerate() {
            s.push_str(&format!("{i},{j},{:.6},{:.6},{:.6}\n", q[0], q[1], q[2]));
        }
    }
    s
}

/// Predictions in millimetres together with their metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Pose>,
    pub report: MetricsReport,
}

/// Sampler settings for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSettings {
    pub timesteps: usize,
    pub hypotheses: usize,
    /// Root of the per-frame random streams.
    pub seed: u64,
}

impl SamplerSettings {
    pub fn from_config(config: &Config) -> Self {
        Self {
            timesteps: config.timesteps,
            hypotheses: config.effective_hypotheses(),
            seed: config.seed,
        }
    }
}

/// Predict one frame in millimetres. The frame's random stream depends only
/// on the seed and the frame id, so results do not depend on evaluation order.
pub fn predict_frame(model: &Model, sample: &FrameSample, settings: SamplerSettings) -> Result<Pose> {
    let input = ModelInput::from_sample(sample, &model.config)?;
    let mut r = rng::stream(rng::derive(settings.seed, streams::EVAL), sample.id as u64);
    let hypotheses = if model.config.components.mh { settings.hypotheses } else { 1 };
    let pose = model.predict(&input, settings.timesteps, hypotheses, &mut r)?;
    Ok(pose.map(|p| sample.cloud.transform.invert(p)))
}

pub fn evaluate(model: &Model, samples: &[FrameSample], settings: SamplerSettings) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Precondition("evaluation set is empty".into()));
    }
    let predictions = samples
        .iter()
        .map(|s| predict_frame(model, s, settings))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Pose> = samples.iter().map(|s| s.joints_mm.clone()).collect();
    let report = MetricsReport::from_predictions(&predictions, &truth, &default_thresholds())?;
    Ok(Evaluation { predictions, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Timesteps,
    Hypotheses,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Timesteps => "timesteps",
            SweepAxis::Hypotheses => "hypotheses",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timesteps" => Ok(SweepAxis::Timesteps),
            "hypotheses" => Ok(SweepAxis::Hypotheses),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected timesteps or hypotheses)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub mean_error_mm: f64,
}

/// One evaluation per value of `axis`, the other setting held at `base`.
pub fn sweep(
    model: &Model,
    samples: &[FrameSample],
    axis: SweepAxis,
    values: &[usize],
    base: SamplerSettings,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Precondition("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let settings = match axis {
                SweepAxis::Timesteps => SamplerSettings { timesteps: value, ..base },
                SweepAxis::Hypotheses => SamplerSettings { hypotheses: value, ..base },
            };
            let e = evaluate(model, samples, settings)?;
            Ok(SweepRow {
                axis,
                value,
                mean_error_mm: e.report.mean_error_mm,
            })
        })
        .collect()
}

/// `axis,value,mean_error_mm` rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,mean_error_mm\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.6}\n", r.axis, r.value, r.mean_error_mm));
    }
    s
}

/// The incremental component rows of the ablation: bare conditional
/// denoiser, then LC, JI, JC+LC, LC+JI, JC+LC+JI, +KC and finally +MH.
pub fn ablation_rows() -> Vec<Components> {
    let c = |jc, lc, ji, kc, mh| Components { jc, lc, ji, kc, mh };
    vec![
        c(false, false, false, false, false),
        c(false, true, false, false, false),
        c(false, false, true, false, false),
        c(true, true, false, false, false),
        c(false, true, true, false, false),
        c(true, true, true, false, false),
        c(true, true, true, true, false),
        Components::FULL,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub components: Components,
    pub training: Vec<EpochReport>,
    pub report: MetricsReport,
}

/// Train and evaluate each component set with the same budget and seed.
pub fn ablate(
    base: &Config,
    variants: &[Components],
    train: &[FrameSample],
    test: &[FrameSample],
    mut on_epoch: impl FnMut(&Components, &EpochReport),
) -> Result<Vec<AblationResult>> {
    if variants.is_empty() {
        return Err(Error::Precondition("no ablation variants".into()));
    }
    for v in variants {
        v.validate()?;
    }
    variants
        .iter()
        .map(|&components| {
            let config = Config {
                components,
                ..base.clone()
            };
            let mut trainer = Trainer::new(Model::new(&config)?);
            let training = trainer.fit(train, |r| on_epoch(&components, r))?;
            let model = trainer.into_model();
            let e = evaluate(&model, test, SamplerSettings::from_config(&config))?;
            Ok(AblationResult {
                components,
                training,
                report: e.report,
            })
        })
        .collect()
}

/// `variant,mean_error_mm` rows.
pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut s = String::from("variant,mean_error_mm\n");
    for r in results {
        s.push_str(&format!("{},{:.6}\n", r.components.label(), r.report.mean_error_mm));
    }
    s
}

/// Mean training pose (normalized frame) placed into each test frame.
pub fn mean_pose_baseline(train: &[FrameSample], test: &[FrameSample]) -> Result<Vec<Pose>> {
    let first = train
        .first()
        .ok_or_else(|| Error::Precondition("baseline needs training frames".into()))?;
    let joints = first.joint_count();
    let mut mean = vec![[0.0; 3]; joints];
    for s in train {
        for (m, p) in mean.iter_mut().zip(s.joints_norm.joints()) {
            for k in 0..3 {
                m[k] += p[k] / train.len() as f64;
            }
        }
    }
    let mean = Pose::new(mean)?;
    Ok(test
        .iter()
        .map(|s| mean.map(|p| s.cloud.transform.invert(p)))
        .collect())
}

/// Symmetric mean nearest-point distance between two clouds.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    let one_way = |x: &[Point3], y: &[Point3]| {
        x.iter()
            .map(|p| y.iter().map(|q| dist2(*p, *q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

/// Pose of the training frame whose normalized cloud is nearest (Chamfer)
/// to each test cloud, placed into the test frame.
pub fn nearest_neighbor_baseline(train: &[FrameSample], test: &[FrameSample]) -> Result<Vec<Pose>> {
    if train.is_empty() {
        return Err(Error::Precondition("baseline needs training frames".into()));
    }
    Ok(test
        .iter()
        .map(|s| {
            let best = train
                .iter()
                .map(|t| chamfer(&s.cloud.points, &t.cloud.points))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .expect("non-empty training set");
            train[best].joints_norm.map(|p| s.cloud.transform.invert(p))
        })
        .collect())
}
